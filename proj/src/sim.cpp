#include "swarmsim/sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "swarmsim/errors.hpp"
#include "swarmsim/peer_registry.hpp"
#include "swarmsim/rebalancer.hpp"
#include "swarmsim/wiring.hpp"

namespace swarmsim::sim {

std::string mode_name(RebalanceMode mode, double period) {
    switch (mode) {
        case RebalanceMode::None: return "none";
        case RebalanceMode::Periodic: {
            std::ostringstream s;
            s << "T=" << period;
            return s.str();
        }
        case RebalanceMode::Oracle: return "oracle";
    }
    return "none";
}

double SimConfig::forward_visit_seconds() const {
    if (forward_service_seconds) return *forward_service_seconds;
    // stage_cost covers forward + backward; backward costs backward_multiplier
    // times the forward pass.
    const auto cost = cost_model::stage_cost(shape, device, overlap);
    return cost.total_seconds / (1.0 + backward_multiplier);
}

std::uint64_t SimConfig::transfer_bytes() const {
    if (state_transfer_bytes) return *state_transfer_bytes;
    return rebalancer::default_state_transfer_bytes(shape);
}

void SimConfig::validate() const {
    if (n_stages == 0) throw ConfigError("SimConfig: need at least one stage");
    if (duration_seconds <= 0.0 || bucket_seconds <= 0.0) {
        throw ConfigError("SimConfig: duration and bucket width must be positive");
    }
    if (trainers_per_peer == 0) throw ConfigError("SimConfig: trainers_per_peer must be >= 1");
    if (backward_multiplier <= 0.0) throw ConfigError("SimConfig: backward_multiplier must be > 0");
    if (rebalance_mode == RebalanceMode::Periodic && rebalance_period <= 0.0) {
        throw ConfigError("SimConfig: rebalance period must be positive");
    }
    if (forward_visit_seconds() <= 0.0) {
        throw ConfigError("SimConfig: forward service time must be positive");
    }
    if (!initial_peers.empty() && initial_peers.size() != n_stages) {
        throw ConfigError("SimConfig: initial_peers must list every stage");
    }
    std::int64_t n0 = 0;
    if (!initial_peers.empty()) {
        for (const auto& stage : initial_peers) {
            if (stage.empty()) throw ConfigError("SimConfig: every stage needs an initial peer");
            n0 += static_cast<std::int64_t>(stage.size());
        }
    } else {
        if (churn.empty() || churn.front().t != 0.0 || churn.front().delta <= 0) {
            throw ConfigError("SimConfig: no initial peers and no t=0 population in the trace");
        }
        n0 = churn.front().delta;
        if (n0 < static_cast<std::int64_t>(n_stages)) {
            throw ConfigError("SimConfig: fewer initial peers than stages");
        }
    }
    shape.validate();
    device.validate();
}

double ThroughputSeries::total() const {
    double t = 0.0;
    for (double c : completed) t += c;
    return t;
}

double oracle_throughput(const std::vector<double>& per_peer_rate_per_stage,
                         std::int64_t total_peers) {
    if (per_peer_rate_per_stage.empty()) throw ConfigError("oracle_throughput: no stages");
    if (total_peers < 0) throw ConfigError("oracle_throughput: negative peer count");
    const std::size_t n_stages = per_peer_rate_per_stage.size();
    if (total_peers < static_cast<std::int64_t>(n_stages)) return 0.0;
    // Water-fill: each peer goes to the currently slowest stage. Optimal for
    // maximizing min_s(count_s * rate_s) since stage rates are separable and
    // monotone in the count.
    std::vector<std::int64_t> counts(n_stages, 0);
    for (std::int64_t p = 0; p < total_peers; ++p) {
        std::size_t best = 0;
        double best_rate = std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < n_stages; ++s) {
            const double r = static_cast<double>(counts[s]) * per_peer_rate_per_stage[s];
            if (r < best_rate) {
                best_rate = r;
                best = s;
            }
        }
        counts[best] += 1;
    }
    double bottleneck = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < n_stages; ++s) {
        bottleneck = std::min(bottleneck, static_cast<double>(counts[s]) *
                                              per_peer_rate_per_stage[s]);
    }
    return bottleneck;
}

namespace {

// ---------------------------------------------------------------------------
// Event machinery

enum class EventKind : int {
    PeerLeave = 0,
    PeerJoin = 1,
    StageComplete = 2,
    MigrationComplete = 3,
    RebalanceTick = 4,
    RebalanceDecide = 5,
    AllReduceTick = 6,
    TrainerStart = 7,
};

struct Event {
    double time = 0.0;
    EventKind kind = EventKind::StageComplete;
    std::uint64_t seq = 0;
    std::size_t worker = 0;      // StageComplete / MigrationComplete
    std::uint64_t token = 0;     // invalidation counter
};

struct EventLater {
    bool operator()(const Event& a, const Event& b) const {
        if (a.time != b.time) return a.time > b.time;
        if (a.kind != b.kind) return static_cast<int>(a.kind) > static_cast<int>(b.kind);
        return a.seq > b.seq;
    }
};

struct Job {
    std::size_t trainer = 0;
    bool backward = false;
};

struct Worker {
    PeerId id;
    std::size_t stage = 0;
    double speed = 1.0;
    bool alive = true;
    bool migrating = false;
    bool in_service = false;
    std::uint64_t token = 0;
    std::deque<Job> queue;
    double q_integral = 0.0;  // time-integral of queue length since window start
    double q_since = 0.0;     // last time q_integral was advanced
    double window_start = 0.0;
    std::vector<double> recent_loads;  // per-tick window averages, newest last
};

struct Trainer {
    std::size_t owner = 0;  // worker index this trainer runs on
    bool active = true;
    bool starving = false;
    bool backward = false;
    std::size_t next_stage = 0;
    double dispatch_time = 0.0;
    std::size_t in_flight_worker = 0;
    bool has_in_flight = false;
    std::vector<PeerId> route;
    wiring::RoutingState routing;

    Trainer(std::size_t owner_idx, std::size_t n_stages, double epsilon)
        : owner(owner_idx), routing(n_stages, 0.1, epsilon) {}
};

// One unit of churn: a single peer joining or leaving.
struct ChurnStep {
    double t = 0.0;
    int delta = 0;  // +1 or -1
};

std::vector<ChurnStep> expand_churn(const trace::Trace& churn, bool skip_initial) {
    std::vector<ChurnStep> steps;
    bool first = true;
    for (const auto& e : churn) {
        if (first && skip_initial && e.t == 0.0 && e.delta > 0) {
            first = false;
            continue;
        }
        first = false;
        const std::int64_t n = std::llabs(e.delta);
        for (std::int64_t i = 0; i < n; ++i) {
            steps.push_back(ChurnStep{e.t, e.delta > 0 ? 1 : -1});
        }
    }
    return steps;
}

class Engine {
public:
    Engine(const SimConfig& config, std::uint64_t seed)
        : cfg_(config),
          rng_(seed),
          registry_(config.n_stages, config.propagation_delay, config.announce_ttl),
          serving_count_(config.n_stages, 0),
          starving_(config.n_stages),
          fwd_seconds_(config.forward_visit_seconds()),
          load_tau_(static_cast<double>(config.trainers_per_peer) *
                    static_cast<double>(config.n_stages) *
                    (1.0 + config.backward_multiplier) * fwd_seconds_) {
        if (cfg_.rebalance_mode == RebalanceMode::Periodic) {
            load_windows_ = static_cast<std::size_t>(
                std::max(1.0, std::ceil(load_tau_ / cfg_.rebalance_period)));
        }
        const std::size_t n_buckets = static_cast<std::size_t>(
            std::ceil(cfg_.duration_seconds / cfg_.bucket_seconds));
        result_.throughput.bucket_seconds = cfg_.bucket_seconds;
        result_.throughput.completed.assign(n_buckets, 0.0);
    }

    SimResult run() {
        seed_initial_population();
        schedule_churn();
        if (cfg_.rebalance_mode == RebalanceMode::Periodic) {
            // Skip ticks that fall inside the initial fill: the first wave of
            // microbatches drains through the stages in order, and reacting
            // to that transient seeds a migration spiral.
            const double warmup = 2.0 * load_tau_;
            for (double t = cfg_.rebalance_period; t < cfg_.duration_seconds;
                 t += cfg_.rebalance_period) {
                if (t < warmup) continue;
                push_event(t, EventKind::RebalanceTick, 0, 0);
            }
        }
        if (cfg_.allreduce_period > 0.0 && cfg_.allreduce_stall > 0.0) {
            for (double t = cfg_.allreduce_period; t < cfg_.duration_seconds;
                 t += cfg_.allreduce_period) {
                push_event(t, EventKind::AllReduceTick, 0, 0);
            }
        }
        // Stagger the initial dispatches over one pipeline traversal.
        // Releasing every trainer at the same instant piles all microbatches
        // onto stage 0 and the clump sloshes through the pipeline for cycles.
        const double stagger = static_cast<double>(cfg_.n_stages) *
                               (1.0 + cfg_.backward_multiplier) * fwd_seconds_;
        for (std::size_t i = 0; i < trainers_.size(); ++i) {
            push_event(uniform01() * stagger, EventKind::TrainerStart, i, 0);
        }

        while (!events_.empty()) {
            Event ev = events_.top();
            events_.pop();
            if (ev.time > cfg_.duration_seconds) break;
            now_ = ev.time;
            handle(ev);
        }
        finalize_snapshot();
        return std::move(result_);
    }

private:
    // -- setup --------------------------------------------------------------

    void seed_initial_population() {
        if (!cfg_.initial_peers.empty()) {
            for (std::size_t s = 0; s < cfg_.n_stages; ++s) {
                for (const PeerSpec& spec : cfg_.initial_peers[s]) add_worker(s, spec.speed, 0.0);
            }
        } else {
            const auto n0 = cfg_.churn.front().delta;
            for (std::int64_t i = 0; i < n0; ++i) {
                add_worker(static_cast<std::size_t>(i) % cfg_.n_stages, 1.0, 0.0);
            }
        }
        // Trainers see the full initial population before the first dispatch.
        for (std::size_t w = 0; w < workers_.size(); ++w) {
            for (std::size_t t = 0; t < cfg_.trainers_per_peer; ++t) spawn_trainer(w);
        }
        alive_total_ = static_cast<std::int64_t>(workers_.size());
    }

    void schedule_churn() {
        churn_steps_ = expand_churn(cfg_.churn, cfg_.initial_peers.empty());
        for (const ChurnStep& step : churn_steps_) {
            if (step.t >= cfg_.duration_seconds) continue;
            push_event(step.t, step.delta < 0 ? EventKind::PeerLeave : EventKind::PeerJoin, 0, 0);
        }
    }

    std::size_t add_worker(std::size_t stage, double speed, double now) {
        const std::size_t idx = workers_.size();
        Worker w;
        w.id = PeerId{static_cast<std::uint64_t>(idx)};
        w.stage = stage;
        w.speed = speed;
        w.q_since = w.window_start = now;
        workers_.push_back(std::move(w));
        serving_count_[stage] += 1;
        registry_.announce(workers_[idx].id, stage, now);
        for (Trainer& tr : trainers_) {
            // Independent phases stagger the newcomer's first pick across
            // trainers; a shared phase would synchronize them into a burst.
            if (tr.active) tr.routing.add_server(workers_[idx].id, {stage}, uniform01());
        }
        return idx;
    }

    void spawn_trainer(std::size_t owner) {
        // Seed the router's priorities and EMAs at the expected visit time so
        // a fresh entry and a mean-seeded newcomer live on the same scale;
        // with one microbatch in flight per trainer, a given peer is revisited
        // too rarely for the EMA to correct a skewed seed.
        Trainer tr(owner, cfg_.n_stages, 0.5 * (1.0 + cfg_.backward_multiplier) * fwd_seconds_);
        for (const Worker& w : workers_) {
            if (w.alive && !w.migrating) tr.routing.add_server(w.id, {w.stage});
        }
        // Fresh routers are identical, so without a random phase every trainer
        // would pick the same lowest-id peer first and pile onto one worker
        // per stage. Rotate each stage's round-robin by a random offset.
        for (std::size_t s = 0; s < cfg_.n_stages; ++s) {
            const auto n = static_cast<std::uint64_t>(std::max<std::int64_t>(serving_count_[s], 0));
            if (n < 2) continue;
            for (std::uint64_t k = draw(n); k > 0; --k) tr.routing.choose_server(s);
        }
        trainers_.push_back(std::move(tr));
    }

    // -- event loop ---------------------------------------------------------

    void push_event(double time, EventKind kind, std::size_t worker, std::uint64_t token) {
        events_.push(Event{time, kind, next_seq_++, worker, token});
    }

    void handle(const Event& ev) {
        switch (ev.kind) {
            case EventKind::StageComplete: on_stage_complete(ev); break;
            case EventKind::PeerLeave: on_peer_leave(); break;
            case EventKind::PeerJoin: on_peer_join(); break;
            case EventKind::RebalanceTick: on_rebalance_tick(); break;
            case EventKind::RebalanceDecide: on_rebalance_decide(ev); break;
            case EventKind::MigrationComplete: on_migration_complete(ev); break;
            case EventKind::AllReduceTick: stall_until_ = now_ + cfg_.allreduce_stall; break;
            case EventKind::TrainerStart:
                if (trainers_[ev.worker].active) start_microbatch(ev.worker, now_);
                break;
        }
    }

    // -- dispatch / service -------------------------------------------------

    double visit_seconds(const Worker& w, bool backward) const {
        const double base = backward ? fwd_seconds_ * cfg_.backward_multiplier : fwd_seconds_;
        return base / w.speed;
    }

    // Time-integral of the queue length, advanced lazily. Must be called just
    // before every queue-length change.
    void touch_queue(Worker& w) {
        w.q_integral += static_cast<double>(w.queue.size()) * (now_ - w.q_since);
        w.q_since = now_;
    }

    // Queue length averaged over the last few tick windows, together spanning
    // at least one steady-state sojourn. An instantaneous snapshot mostly
    // measures where the current wave of in-flight microbatches happens to
    // sit; averaging over a whole wave period cancels that component, which
    // would otherwise dominate the stage-load comparison.
    double average_load(Worker& w) {
        touch_queue(w);
        const double span = now_ - w.window_start;
        const double avg = span > 0.0 ? w.q_integral / span
                                      : static_cast<double>(w.queue.size());
        w.q_integral = 0.0;
        w.window_start = now_;
        w.recent_loads.push_back(avg);
        if (w.recent_loads.size() > load_windows_) {
            w.recent_loads.erase(w.recent_loads.begin(),
                                 w.recent_loads.end() - load_windows_);
        }
        double sum = 0.0;
        for (double v : w.recent_loads) sum += v;
        return sum / static_cast<double>(w.recent_loads.size());
    }

    void start_service(std::size_t widx) {
        Worker& w = workers_[widx];
        if (!w.alive || w.migrating || w.in_service || w.queue.empty()) return;
        const double start = std::max(now_, stall_until_);
        w.in_service = true;
        w.token += 1;
        push_event(start + visit_seconds(w, w.queue.front().backward), EventKind::StageComplete,
                   widx, w.token);
    }

    void dispatch_current(std::size_t tidx) {
        Trainer& tr = trainers_[tidx];
        const std::size_t stage = tr.next_stage;
        PeerId peer{};
        bool picked = false;
        if (tr.backward) {
            // Backward retraces the recorded forward route where possible.
            const PeerId candidate = tr.route[stage];
            const Worker& cw = workers_[candidate.value];
            if (cw.alive && !cw.migrating && cw.stage == stage &&
                tr.routing.knows(candidate) && !tr.routing.is_banned(candidate)) {
                peer = candidate;
                picked = true;
            }
        }
        if (!picked) {
            try {
                peer = tr.routing.choose_server(stage);
            } catch (const NoPeerAvailable&) {
                mark_starving(tidx, stage);
                return;
            }
        }
        Worker& w = workers_[peer.value];
        tr.dispatch_time = now_;
        tr.in_flight_worker = peer.value;
        tr.has_in_flight = true;
        result_.dispatched += 1;
        touch_queue(w);
        w.queue.push_back(Job{tidx, tr.backward});
        start_service(peer.value);
    }

    void start_microbatch(std::size_t tidx, double /*now*/) {
        Trainer& tr = trainers_[tidx];
        tr.backward = false;
        tr.next_stage = 0;
        tr.route.assign(cfg_.n_stages, PeerId{});
        dispatch_current(tidx);
    }

    void mark_starving(std::size_t tidx, std::size_t stage) {
        Trainer& tr = trainers_[tidx];
        tr.starving = true;
        tr.has_in_flight = false;
        starving_[stage].push_back(tidx);
        if (serving_count_[stage] == 0) {
            result_.starvation_recorded = true;
            if (!starvation_logged_[stage]) {
                starvation_logged_[stage] = true;
                log({{"t", now_}, {"event", "starvation_halt"}, {"stage", stage}});
            }
        }
    }

    void wake_starving(std::size_t stage) {
        starvation_logged_[stage] = false;
        auto waiting = std::move(starving_[stage]);
        starving_[stage].clear();
        for (std::size_t tidx : waiting) {
            Trainer& tr = trainers_[tidx];
            if (!tr.active || !tr.starving) continue;
            tr.starving = false;
            dispatch_current(tidx);
        }
    }

    void on_stage_complete(const Event& ev) {
        Worker& w = workers_[ev.worker];
        if (!w.alive || ev.token != w.token || w.queue.empty()) return;  // stale
        const Job job = w.queue.front();
        touch_queue(w);
        w.queue.pop_front();
        w.in_service = false;

        Trainer& tr = trainers_[job.trainer];
        if (!tr.active) {
            result_.abandoned += 1;
        } else {
            tr.has_in_flight = false;
            // Processing time of the visit itself; queueing delay would swamp
            // the signal, and queue imbalance is what the round-robin corrects.
            tr.routing.record_response(w.id, visit_seconds(w, job.backward));
            advance_trainer(job.trainer);
        }
        start_service(ev.worker);
    }

    void advance_trainer(std::size_t tidx) {
        Trainer& tr = trainers_[tidx];
        if (!tr.backward) {
            tr.route[tr.next_stage] = workers_[tr.in_flight_worker].id;
            if (tr.next_stage + 1 < cfg_.n_stages) {
                tr.next_stage += 1;
            } else {
                tr.backward = true;  // turn around at the last stage
            }
            dispatch_current(tidx);
        } else if (tr.next_stage > 0) {
            tr.next_stage -= 1;
            dispatch_current(tidx);
        } else {
            record_completion();
            start_microbatch(tidx, now_);
        }
    }

    void record_completion() {
        result_.completed += 1;
        auto bucket = static_cast<std::size_t>(now_ / cfg_.bucket_seconds);
        if (bucket >= result_.throughput.completed.size()) {
            bucket = result_.throughput.completed.size() - 1;
        }
        result_.throughput.completed[bucket] += 1.0;
    }

    // -- churn --------------------------------------------------------------

    std::uint64_t draw(std::uint64_t n) { return rng_() % n; }

    double uniform01() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

    void on_peer_join() {
        std::size_t stage;
        if (cfg_.rebalance_mode == RebalanceMode::Periodic) {
            // Joining peers follow the rebalancing protocol: fill the
            // short-staffed stage. Momentary queue lengths are a poor guide
            // here — they track where the current wave of microbatches sits,
            // and a burst of joiners would all chase it to the same stage.
            stage = 0;
            for (std::size_t s = 1; s < cfg_.n_stages; ++s) {
                if (serving_count_[s] < serving_count_[stage]) stage = s;
            }
        } else {
            stage = static_cast<std::size_t>(draw(cfg_.n_stages));
        }
        const std::size_t widx = add_worker(stage, 1.0, now_);
        alive_total_ += 1;
        for (Trainer& tr : trainers_) {
            if (tr.active) tr.routing.add_server(workers_[widx].id, {stage}, uniform01());
        }
        log({{"t", now_}, {"event", "peer_join"}, {"peer", widx}, {"stage", stage}});
        for (std::size_t t = 0; t < cfg_.trainers_per_peer; ++t) {
            spawn_trainer(widx);
            start_microbatch(trainers_.size() - 1, now_);
        }
        wake_starving(stage);
    }

    void on_peer_leave() {
        if (alive_total_ <= static_cast<std::int64_t>(cfg_.n_stages)) return;  // population floor
        // Pick the stage to preempt uniformly, then a uniform member of it.
        // Sampling uniformly over peers instead would hit crowded stages more
        // often and quietly re-balance the pipeline on its own.
        std::vector<std::vector<std::size_t>> by_stage(cfg_.n_stages);
        std::vector<std::size_t> movers;
        for (std::size_t i = 0; i < workers_.size(); ++i) {
            const Worker& w = workers_[i];
            if (!w.alive) continue;
            if (w.migrating) {
                movers.push_back(i);
            } else if (serving_count_[w.stage] >= 2) {
                by_stage[w.stage].push_back(i);
            }
        }
        std::vector<std::size_t> stages;  // stages with an eligible victim
        for (std::size_t s = 0; s < cfg_.n_stages; ++s) {
            if (!by_stage[s].empty()) stages.push_back(s);
        }
        if (stages.empty()) {
            if (movers.empty()) return;
            kill_worker(movers[draw(movers.size())]);
            return;
        }
        const auto& pool = by_stage[stages[draw(stages.size())]];
        kill_worker(pool[draw(pool.size())]);
    }

    void kill_worker(std::size_t widx) {
        Worker& w = workers_[widx];
        const bool was_migrating = w.migrating;
        w.alive = false;
        w.token += 1;  // invalidate any pending completion / migration event
        alive_total_ -= 1;
        if (!was_migrating) {
            serving_count_[w.stage] -= 1;
            registry_.withdraw(w.id, w.stage);
        }
        log({{"t", now_},
             {"event", was_migrating ? "migration_aborted" : "peer_leave"},
             {"peer", widx},
             {"stage", w.stage}});

        // This peer's trainers stop; their in-flight work is abandoned.
        for (Trainer& tr : trainers_) {
            if (tr.owner == widx && tr.active) {
                tr.active = false;
                tr.routing = wiring::RoutingState(cfg_.n_stages, 0.1, 1.0);  // free the maps
            }
        }
        // Preempted peers never come back, so drop them outright instead of
        // keeping a banned entry around.
        for (Trainer& tr : trainers_) {
            if (tr.active && tr.routing.knows(w.id)) tr.routing.remove_server(w.id);
        }
        // Requeue work that was sitting on the dead peer.
        std::deque<Job> orphans;
        touch_queue(w);
        orphans.swap(w.queue);
        w.in_service = false;
        for (const Job& job : orphans) {
            Trainer& tr = trainers_[job.trainer];
            if (!tr.active) {
                result_.abandoned += 1;
                continue;
            }
            tr.has_in_flight = false;
            result_.requeued += 1;
            dispatch_current(job.trainer);
        }
    }

    // -- rebalancing --------------------------------------------------------

    void on_rebalance_tick() {
        for (Worker& w : workers_) {
            if (!w.alive || w.migrating) continue;
            registry_.announce(w.id, w.stage, now_);
            // Publish the queue length averaged since the previous tick: an
            // instantaneous snapshot mostly measures where the current wave of
            // microbatches happens to sit, not which stage is short-handed.
            registry_.publish_load(w.id, w.stage, average_load(w), now_);
        }
        push_event(now_ + cfg_.straggler_timeout, EventKind::RebalanceDecide, 0, 0);
        tick_times_.push_back(now_);
    }

    void on_rebalance_decide(const Event&) {
        const double tick_time = tick_times_.empty() ? now_ : tick_times_.front();
        if (!tick_times_.empty()) tick_times_.erase(tick_times_.begin());
        const auto table =
            rebalancer::collect_loads(registry_, tick_time, cfg_.straggler_timeout);
        const auto decision = rebalancer::decide(table);
        nlohmann::json j{{"t", now_},
                         {"event", "rebalance_decision"},
                         {"from", decision.from_stage},
                         {"to", decision.to_stage},
                         {"loads", table.loads}};
        if (!decision.mover) {
            j["mover"] = nullptr;
            log(j);
            return;
        }
        const std::size_t widx = static_cast<std::size_t>(decision.mover->value);
        Worker& w = workers_[widx];
        // The table is a few seconds stale; re-check against live state.
        if (!w.alive || w.migrating || w.stage != decision.from_stage ||
            serving_count_[w.stage] < 2) {
            j["mover"] = nullptr;
            j["skipped"] = true;
            log(j);
            return;
        }
        j["mover"] = widx;
        log(j);
        begin_migration(widx, decision.to_stage);
    }

    void begin_migration(std::size_t widx, std::size_t to_stage) {
        Worker& w = workers_[widx];
        serving_count_[w.stage] -= 1;
        registry_.withdraw(w.id, w.stage);
        w.migrating = true;
        w.stage = to_stage;  // destination; not serving until the download ends
        w.token += 1;
        for (Trainer& tr : trainers_) {
            if (tr.routing.knows(w.id) && !tr.routing.is_banned(w.id)) {
                tr.routing.ban_server(w.id);
            }
        }
        std::deque<Job> orphans;
        touch_queue(w);
        orphans.swap(w.queue);
        w.in_service = false;
        for (const Job& job : orphans) {
            Trainer& tr = trainers_[job.trainer];
            if (!tr.active) {
                result_.abandoned += 1;
                continue;
            }
            tr.has_in_flight = false;
            result_.requeued += 1;
            dispatch_current(job.trainer);
        }
        const double downtime =
            static_cast<double>(cfg_.transfer_bytes()) * 8.0 / cfg_.device.download_bps;
        push_event(now_ + downtime, EventKind::MigrationComplete, widx, w.token);
    }

    void on_migration_complete(const Event& ev) {
        Worker& w = workers_[ev.worker];
        if (!w.alive || ev.token != w.token) return;  // preempted mid-transfer
        w.migrating = false;
        serving_count_[w.stage] += 1;
        w.q_integral = 0.0;  // fresh load history on the new stage
        w.q_since = w.window_start = now_;
        w.recent_loads.clear();
        registry_.announce(w.id, w.stage, now_);
        for (Trainer& tr : trainers_) {
            if (tr.active) tr.routing.add_server(w.id, {w.stage}, uniform01());
        }
        log({{"t", now_}, {"event", "migration_complete"}, {"peer", ev.worker},
             {"stage", w.stage}});
        wake_starving(w.stage);
    }

    // -- output -------------------------------------------------------------

    void log(const nlohmann::json& j) { result_.event_log.push_back(j.dump()); }

    void finalize_snapshot() {
        for (const Trainer& tr : trainers_) {
            if (tr.active) {
                result_.routing_snapshot_json = tr.routing.dump_json();
                break;
            }
        }
        nlohmann::json j{{"event", "summary"},
                         {"dispatched", result_.dispatched},
                         {"completed", result_.completed},
                         {"requeued", result_.requeued},
                         {"abandoned", result_.abandoned}};
        log(j);
    }

    const SimConfig& cfg_;
    std::mt19937_64 rng_;
    registry::PeerRegistry registry_;
    std::vector<Worker> workers_;
    std::vector<Trainer> trainers_;
    std::vector<std::int64_t> serving_count_;
    std::vector<std::vector<std::size_t>> starving_;
    std::map<std::size_t, bool> starvation_logged_;
    std::vector<ChurnStep> churn_steps_;
    std::vector<double> tick_times_;
    std::priority_queue<Event, std::vector<Event>, EventLater> events_;
    std::uint64_t next_seq_ = 0;
    std::int64_t alive_total_ = 0;
    double now_ = 0.0;
    double stall_until_ = 0.0;
    double fwd_seconds_;
    double load_tau_;
    std::size_t load_windows_ = 1;
    SimResult result_;
};

/// Best-possible completions per bucket given the live population implied by
/// the trace. The oracle runs the same pipeline mechanics, so its output is
/// offset by one pipeline fill.
ThroughputSeries oracle_series(const SimConfig& cfg) {
    const double fwd = cfg.forward_visit_seconds();
    const double per_peer_rate = 1.0 / (fwd * (1.0 + cfg.backward_multiplier));
    const std::vector<double> rates(cfg.n_stages, per_peer_rate);
    const double fill = static_cast<double>(cfg.n_stages) * fwd * (1.0 + cfg.backward_multiplier);

    // Deterministic population timeline, mirroring the engine's floor rule.
    std::int64_t n = 0;
    if (!cfg.initial_peers.empty()) {
        for (const auto& stage : cfg.initial_peers) n += static_cast<std::int64_t>(stage.size());
    }
    std::vector<std::pair<double, std::int64_t>> timeline;  // (time, population)
    const auto steps = expand_churn(cfg.churn, cfg.initial_peers.empty());
    if (cfg.initial_peers.empty()) n = cfg.churn.front().delta;
    timeline.emplace_back(0.0, n);
    for (const ChurnStep& s : steps) {
        if (s.delta < 0 && n <= static_cast<std::int64_t>(cfg.n_stages)) continue;
        n += s.delta;
        timeline.emplace_back(s.t, n);
    }

    ThroughputSeries out;
    out.bucket_seconds = cfg.bucket_seconds;
    out.completed.assign(
        static_cast<std::size_t>(std::ceil(cfg.duration_seconds / cfg.bucket_seconds)), 0.0);
    for (std::size_t i = 0; i < timeline.size(); ++i) {
        const double t0 = std::max(timeline[i].first, fill);
        const double t1 = std::min(
            i + 1 < timeline.size() ? timeline[i + 1].first : cfg.duration_seconds,
            cfg.duration_seconds);
        if (t1 <= t0) continue;
        const double rate = oracle_throughput(rates, timeline[i].second);
        // Spread rate * dt across the buckets the interval overlaps.
        double t = t0;
        while (t < t1) {
            const auto bucket = static_cast<std::size_t>(t / cfg.bucket_seconds);
            const double bucket_end = static_cast<double>(bucket + 1) * cfg.bucket_seconds;
            const double seg = std::min(bucket_end, t1) - t;
            if (bucket < out.completed.size()) out.completed[bucket] += rate * seg;
            t += seg;
        }
    }
    return out;
}

}  // namespace

SimResult run(const SimConfig& config, std::uint64_t seed) {
    config.validate();
    if (config.rebalance_mode == RebalanceMode::Oracle) {
        SimResult result;
        result.oracle = oracle_series(config);
        result.throughput = result.oracle;
        result.completed = static_cast<std::uint64_t>(result.throughput.total());
        result.dispatched = result.completed;
        return result;
    }
    Engine engine(config, seed);
    SimResult result = engine.run();
    result.oracle = oracle_series(config);
    return result;
}

namespace {

double window_pct(const ThroughputSeries& actual, const ThroughputSeries& oracle,
                  std::size_t first_bucket, std::size_t last_bucket) {
    double a = 0.0, o = 0.0;
    for (std::size_t i = first_bucket; i < last_bucket && i < actual.completed.size(); ++i) {
        a += actual.completed[i];
        o += i < oracle.completed.size() ? oracle.completed[i] : 0.0;
    }
    return o > 0.0 ? 100.0 * a / o : 100.0;
}

}  // namespace

ExperimentResult replay_experiment(const SimConfig& base, const std::vector<double>& periods,
                                   const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw ConfigError("replay_experiment: need at least one seed");
    std::vector<std::pair<RebalanceMode, double>> modes;
    modes.emplace_back(RebalanceMode::None, 0.0);
    for (double p : periods) modes.emplace_back(RebalanceMode::Periodic, p);
    modes.emplace_back(RebalanceMode::Oracle, 0.0);

    ExperimentResult out;
    const std::size_t hour_buckets =
        static_cast<std::size_t>(std::llround(3600.0 / base.bucket_seconds));

    for (const auto& [mode, period] : modes) {
        SimConfig cfg = base;
        cfg.rebalance_mode = mode;
        cfg.rebalance_period = period;

        ThroughputSeries avg;
        ThroughputSeries avg_oracle;
        double overall = 0.0, first = 0.0, last = 0.0;
        for (std::uint64_t seed : seeds) {
            SimResult r = run(cfg, seed);
            const std::size_t n = r.throughput.completed.size();
            if (avg.completed.empty()) {
                avg.bucket_seconds = r.throughput.bucket_seconds;
                avg.completed.assign(n, 0.0);
                avg_oracle = avg;
            }
            for (std::size_t i = 0; i < n; ++i) {
                avg.completed[i] += r.throughput.completed[i] / static_cast<double>(seeds.size());
                avg_oracle.completed[i] +=
                    r.oracle.completed[i] / static_cast<double>(seeds.size());
            }
            overall += window_pct(r.throughput, r.oracle, 0, n);
            first += window_pct(r.throughput, r.oracle, 0, hour_buckets);
            last += window_pct(r.throughput, r.oracle, n > hour_buckets ? n - hour_buckets : 0, n);
        }
        const auto k = static_cast<double>(seeds.size());
        out.rows.push_back(
            ComparisonRow{mode_name(mode, period), overall / k, first / k, last / k});
        out.series.push_back(std::move(avg));
        if (mode == RebalanceMode::Oracle) out.oracle_series = out.series.back();
    }
    return out;
}

std::vector<StageScalingRow> stage_scaling_experiment(const SimConfig& base,
                                                      const std::vector<std::size_t>& stage_counts,
                                                      double period,
                                                      const std::vector<std::uint64_t>& seeds) {
    std::vector<StageScalingRow> rows;
    for (std::size_t stages : stage_counts) {
        SimConfig cfg = base;
        cfg.n_stages = stages;
        cfg.initial_peers.clear();
        cfg.churn = trace::scale_for_stages(base.churn, base.n_stages, stages);

        StageScalingRow row;
        row.n_stages = stages;
        for (std::uint64_t seed : seeds) {
            cfg.rebalance_mode = RebalanceMode::Periodic;
            cfg.rebalance_period = period;
            SimResult reb = run(cfg, seed);
            cfg.rebalance_mode = RebalanceMode::None;
            SimResult none = run(cfg, seed);
            const std::size_t n = reb.throughput.completed.size();
            row.rebalanced_pct +=
                window_pct(reb.throughput, reb.oracle, 0, n) / static_cast<double>(seeds.size());
            row.baseline_pct +=
                window_pct(none.throughput, none.oracle, 0, n) / static_cast<double>(seeds.size());
        }
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// JSON config

SimConfig SimConfig::from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("SimConfig: ") + e.what());
    }
    SimConfig cfg;
    try {
        if (j.contains("stages")) cfg.n_stages = j.at("stages").get<std::size_t>();
        if (j.contains("preset")) cfg.shape = cost_model::preset(j.at("preset").get<std::string>());
        if (j.contains("shape")) cfg.shape = cost_model::shape_from_json(j.at("shape").dump());
        if (j.contains("device")) {
            const auto& d = j.at("device");
            if (d.contains("effective_flops"))
                cfg.device.effective_flops = d.at("effective_flops").get<double>();
            if (d.contains("upload_bps")) cfg.device.upload_bps = d.at("upload_bps").get<double>();
            if (d.contains("download_bps"))
                cfg.device.download_bps = d.at("download_bps").get<double>();
            if (d.contains("rtt_seconds"))
                cfg.device.rtt_seconds = d.at("rtt_seconds").get<double>();
        }
        if (j.contains("overlap")) cfg.overlap = j.at("overlap").get<bool>();
        if (j.contains("forward_service_seconds"))
            cfg.forward_service_seconds = j.at("forward_service_seconds").get<double>();
        if (j.contains("backward_multiplier"))
            cfg.backward_multiplier = j.at("backward_multiplier").get<double>();
        if (j.contains("initial_peers")) {
            for (const auto& stage : j.at("initial_peers")) {
                std::vector<PeerSpec> peers;
                for (const auto& p : stage) {
                    PeerSpec spec;
                    if (p.contains("speed")) spec.speed = p.at("speed").get<double>();
                    peers.push_back(spec);
                }
                cfg.initial_peers.push_back(std::move(peers));
            }
        }
        if (j.contains("rebalance")) {
            const auto& r = j.at("rebalance");
            const auto mode = r.at("mode").get<std::string>();
            if (mode == "none") {
                cfg.rebalance_mode = RebalanceMode::None;
            } else if (mode == "periodic") {
                cfg.rebalance_mode = RebalanceMode::Periodic;
                cfg.rebalance_period = r.at("period").get<double>();
            } else if (mode == "oracle") {
                cfg.rebalance_mode = RebalanceMode::Oracle;
            } else {
                throw ConfigError("SimConfig: unknown rebalance mode " + mode);
            }
        }
        if (j.contains("straggler_timeout"))
            cfg.straggler_timeout = j.at("straggler_timeout").get<double>();
        if (j.contains("propagation_delay"))
            cfg.propagation_delay = j.at("propagation_delay").get<double>();
        if (j.contains("announce_ttl")) cfg.announce_ttl = j.at("announce_ttl").get<double>();
        if (j.contains("state_transfer_bytes"))
            cfg.state_transfer_bytes = j.at("state_transfer_bytes").get<std::uint64_t>();
        if (j.contains("duration_hours"))
            cfg.duration_seconds = j.at("duration_hours").get<double>() * 3600.0;
        if (j.contains("duration_seconds"))
            cfg.duration_seconds = j.at("duration_seconds").get<double>();
        if (j.contains("bucket_seconds")) cfg.bucket_seconds = j.at("bucket_seconds").get<double>();
        if (j.contains("trainers_per_peer"))
            cfg.trainers_per_peer = j.at("trainers_per_peer").get<std::size_t>();
        if (j.contains("allreduce_period"))
            cfg.allreduce_period = j.at("allreduce_period").get<double>();
        if (j.contains("allreduce_stall"))
            cfg.allreduce_stall = j.at("allreduce_stall").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("SimConfig: ") + e.what());
    }
    return cfg;
}

std::string SimConfig::to_json() const {
    nlohmann::json j;
    j["stages"] = n_stages;
    j["shape"] = {{"d_model", shape.d_model},
                  {"d_ffn", shape.d_ffn},
                  {"n_heads", shape.n_heads},
                  {"seq_len", shape.seq_len},
                  {"batch", shape.batch},
                  {"layers_per_stage", shape.layers_per_stage},
                  {"activation_bytes_per_element", shape.activation_bytes_per_element}};
    j["device"] = {{"effective_flops", device.effective_flops},
                   {"upload_bps", device.upload_bps},
                   {"download_bps", device.download_bps},
                   {"rtt_seconds", device.rtt_seconds}};
    j["overlap"] = overlap;
    if (forward_service_seconds) j["forward_service_seconds"] = *forward_service_seconds;
    j["backward_multiplier"] = backward_multiplier;
    if (!initial_peers.empty()) {
        nlohmann::json stages = nlohmann::json::array();
        for (const auto& stage : initial_peers) {
            nlohmann::json peers = nlohmann::json::array();
            for (const auto& p : stage) peers.push_back({{"speed", p.speed}});
            stages.push_back(std::move(peers));
        }
        j["initial_peers"] = std::move(stages);
    }
    j["rebalance"] = {{"mode", rebalance_mode == RebalanceMode::None        ? "none"
                               : rebalance_mode == RebalanceMode::Periodic ? "periodic"
                                                                           : "oracle"},
                      {"period", rebalance_period}};
    j["straggler_timeout"] = straggler_timeout;
    j["propagation_delay"] = propagation_delay;
    j["announce_ttl"] = announce_ttl;
    if (state_transfer_bytes) j["state_transfer_bytes"] = *state_transfer_bytes;
    j["duration_seconds"] = duration_seconds;
    j["bucket_seconds"] = bucket_seconds;
    j["trainers_per_peer"] = trainers_per_peer;
    j["allreduce_period"] = allreduce_period;
    j["allreduce_stall"] = allreduce_stall;
    return j.dump(2);
}

}  // namespace swarmsim::sim
