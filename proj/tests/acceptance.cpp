// End-to-end acceptance checks. Each check prints exactly one PASS/FAIL line;
// the binary exits nonzero if any of them fail.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "swarmsim/compression.hpp"
#include "swarmsim/cost_model.hpp"
#include "swarmsim/rebalancer.hpp"
#include "swarmsim/sim.hpp"
#include "swarmsim/trace.hpp"
#include "swarmsim/wiring.hpp"

using namespace swarmsim;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;
};

using Check = std::function<Outcome()>;

// Symmetric relative difference: the published table rounds to 2 significant
// figures, so neither value is privileged as the denominator.
bool within_pct(double value, double reference, double pct) {
    const double scale = std::max(std::fabs(value), std::fabs(reference));
    return std::fabs(value - reference) <= scale * pct / 100.0;
}

// --- 1. model cost table ----------------------------------------------------

Outcome check_cost_table() {
    struct Row {
        const char* preset;
        double params;
        double flops;
    };
    // params per layer, fwd+bwd FLOPs per microbatch per stage
    const Row rows[] = {
        {"base", 7.1e6, 2.2e10},
        {"xxlarge", 2.01e8, 6.2e11},
        {"gpt3", 1.81e9, 5.5e12},
        {"ours", 2.01e8, 1.8e12},
    };
    Outcome out;
    std::ostringstream detail;
    for (const Row& row : rows) {
        const auto shape = cost_model::preset(row.preset);
        const double params = static_cast<double>(cost_model::params_per_layer(shape));
        const double flops = cost_model::flops_per_stage(shape, true);
        if (!within_pct(params, row.params, 3.0) || !within_pct(flops, row.flops, 3.0)) {
            out.ok = false;
            detail << " " << row.preset << "(params=" << params << ", flops=" << flops << ")";
        }
    }
    out.detail = out.ok ? "all presets within 3%" : "off target:" + detail.str();
    return out;
}

// --- 2. square-cube scaling -------------------------------------------------

Outcome check_square_cube() {
    Outcome out;
    for (std::int64_t d : {256, 512, 1024, 2048, 4096}) {
        cost_model::LayerShape small{d, 4 * d, 1, 512, 1, 1, 2.0};
        cost_model::LayerShape big{2 * d, 8 * d, 1, 512, 1, 1, 2.0};
        const double ratio = cost_model::square_cube_ratio(big) / cost_model::square_cube_ratio(small);
        if (std::fabs(ratio - 2.0) > 1e-9) {
            out.ok = false;
            out.detail = "doubling d_model gave ratio " + std::to_string(ratio);
            return out;
        }
    }

    cost_model::DeviceProfile device;
    device.effective_flops = 5e13;
    device.upload_bps = device.download_bps = 500e6;
    const char* names[] = {"base", "xxlarge", "gpt3"};
    for (double rtt_ms : {0.0, 10.0, 50.0, 100.0, 200.0}) {
        device.rtt_seconds = rtt_ms / 1000.0;
        double prev = -1.0;
        for (const char* name : names) {
            const double u =
                cost_model::stage_cost(cost_model::preset(name), device, true).utilization;
            if (u < prev) {
                out.ok = false;
                out.detail = "utilization not increasing in model size at rtt " +
                             std::to_string(rtt_ms) + " ms";
                return out;
            }
            prev = u;
        }
    }
    for (const char* name : {"base", "xxlarge", "gpt3", "ours"}) {
        double prev = 2.0;
        for (double rtt_ms : {0.0, 10.0, 50.0, 100.0, 200.0}) {
            device.rtt_seconds = rtt_ms / 1000.0;
            const double u =
                cost_model::stage_cost(cost_model::preset(name), device, true).utilization;
            if (u > prev) {
                out.ok = false;
                out.detail = std::string("utilization not decreasing in rtt for ") + name;
                return out;
            }
            prev = u;
        }
    }
    out.detail = "doubling exact to 1e-9; grid orderings monotone";
    return out;
}

// --- 3. routing shares ------------------------------------------------------

Outcome check_routing_shares() {
    wiring::RoutingState rs(1, 1.0, 1.0);
    for (std::uint64_t id : {1, 2, 3}) rs.add_server(PeerId{id}, {0});
    rs.record_response(PeerId{1}, 1.0);
    rs.record_response(PeerId{2}, 2.0);
    rs.record_response(PeerId{3}, 4.0);
    std::map<std::uint64_t, int> counts;
    const int n = 10000;
    for (int i = 0; i < n; ++i) counts[rs.choose_server(0).value] += 1;
    const double expected[] = {4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0};
    Outcome out;
    std::ostringstream detail;
    for (std::uint64_t id : {1, 2, 3}) {
        const double share = counts[id] / static_cast<double>(n);
        detail << (id > 1 ? "/" : "") << share;
        if (std::fabs(share - expected[id - 1]) > 0.02) out.ok = false;
    }
    out.detail = "shares " + detail.str() + " vs 4:2:1 over 7";
    return out;
}

// --- 4. churn replay --------------------------------------------------------

sim::SimConfig experiment_config() {
    sim::SimConfig cfg;
    cfg.n_stages = 4;
    cfg.churn = trace::generate_stationary(400, 30.0, 30.0, 32.0, 20240817, 4);
    cfg.forward_service_seconds = 30.0;
    cfg.backward_multiplier = 2.0;
    cfg.trainers_per_peer = 2;
    cfg.duration_seconds = 32.0 * 3600.0;
    cfg.bucket_seconds = 60.0;
    // migration downtime: ~58 s of state download at 500 Mbps
    return cfg;
}

std::vector<std::uint64_t> ten_seeds() { return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}; }

Outcome check_churn_replay() {
    const auto res = sim::replay_experiment(experiment_config(), {300.0, 60.0}, ten_seeds());
    const auto& none = res.rows[0];
    const auto& t300 = res.rows[1];
    const auto& t60 = res.rows[2];

    Outcome out;
    std::ostringstream detail;
    detail.setf(std::ios::fixed);
    detail.precision(1);
    detail << "overall none=" << none.overall_pct << " T300=" << t300.overall_pct
           << " T60=" << t60.overall_pct << "; first-hour " << none.first_hour_pct << "/"
           << t300.first_hour_pct << "/" << t60.first_hour_pct << "; last-hour "
           << none.last_hour_pct << "/" << t300.last_hour_pct;
    out.detail = detail.str();

    if (!(none.overall_pct < t300.overall_pct && t300.overall_pct <= t60.overall_pct &&
          t60.overall_pct <= 100.0)) {
        out.ok = false;
    }
    if (t60.overall_pct - none.overall_pct < 5.0) out.ok = false;
    if (none.first_hour_pct < 95.0 || t300.first_hour_pct < 95.0 || t60.first_hour_pct < 95.0) {
        out.ok = false;
    }
    if (t300.last_hour_pct - none.last_hour_pct < 10.0) out.ok = false;
    return out;
}

// --- 5. stage-count scaling -------------------------------------------------

Outcome check_stage_scaling() {
    sim::SimConfig cfg;
    cfg.n_stages = 4;
    cfg.churn = trace::generate_stationary(64, 16.0, 16.0, 8.0, 424242, 4);
    cfg.forward_service_seconds = 30.0;
    cfg.trainers_per_peer = 2;
    cfg.duration_seconds = 8.0 * 3600.0;

    const auto rows = sim::stage_scaling_experiment(cfg, {4, 8, 16, 32}, 300.0, ten_seeds());
    Outcome out;
    std::ostringstream detail;
    detail.setf(std::ios::fixed);
    detail.precision(1);
    for (const auto& row : rows) {
        detail << " S=" << row.n_stages << ":" << row.rebalanced_pct << ">="
               << row.baseline_pct;
        if (row.rebalanced_pct < row.baseline_pct) out.ok = false;
    }
    out.detail = "rebalanced vs baseline:" + detail.str();
    return out;
}

// --- 6. chaos runs ----------------------------------------------------------

Outcome check_chaos() {
    Outcome out;
    std::mt19937_64 rng(555);
    for (int trial = 0; trial < 100; ++trial) {
        sim::SimConfig cfg;
        cfg.n_stages = 4;
        cfg.forward_service_seconds = 5.0;
        cfg.duration_seconds = 3000.0;
        cfg.bucket_seconds = 60.0;
        cfg.state_transfer_bytes = 625'000'000;  // 10 s downtime
        if (trial % 2 == 1) {
            cfg.rebalance_mode = sim::RebalanceMode::Periodic;
            cfg.rebalance_period = 120.0;
        }
        // mass extinction down to one survivor per stage, then a refill
        const double t_kill = 300.0 + static_cast<double>(rng() % 1200);
        const double t_refill = t_kill + 300.0;
        cfg.churn = {{0.0, 12}, {t_kill, -8}, {t_refill, 8}};

        sim::SimResult r;
        try {
            r = sim::run(cfg, rng());
        } catch (const std::exception& e) {
            out.ok = false;
            out.detail = "trial " + std::to_string(trial) + " threw: " + e.what();
            return out;
        }
        if (r.starvation_recorded) {
            out.ok = false;
            out.detail = "trial " + std::to_string(trial) + " starved a stage";
            return out;
        }
        // one pipeline traversal is 4 * 15 s; after that every minute must
        // see progress, including through the kill and the refill
        const auto& buckets = r.throughput.completed;
        for (std::size_t i = 2; i < buckets.size(); ++i) {
            if (buckets[i] <= 0.0) {
                out.ok = false;
                out.detail = "trial " + std::to_string(trial) + " stalled in bucket " +
                             std::to_string(i) + " (kill at " + std::to_string(t_kill) + ")";
                return out;
            }
        }
    }
    out.detail = "100 kill/refill runs kept completing";
    return out;
}

// --- 7. rebalance decisions vs exhaustive search ----------------------------

Outcome check_rebalancer_exhaustive() {
    const double qvals[] = {0.0, 1.0, 2.0, 4.0};
    std::size_t checked_guard = 0, checked_pair = 0;
    Outcome out;

    std::vector<std::vector<std::size_t>> splits;  // peers per stage, 1..3 stages
    for (std::size_t a = 1; a <= 6; ++a) {
        splits.push_back({a});
        for (std::size_t b = 1; a + b <= 6; ++b) {
            splits.push_back({a, b});
            for (std::size_t c = 1; a + b + c <= 6; ++c) splits.push_back({a, b, c});
        }
    }

    for (const auto& split : splits) {
        std::size_t total = 0;
        for (std::size_t n : split) total += n;
        std::size_t combos = 1;
        for (std::size_t i = 0; i < total; ++i) combos *= 4;
        for (std::size_t combo = 0; combo < combos; ++combo) {
            rebalancer::StageLoadTable table;
            table.loads.assign(split.size(), 0.0);
            table.members.resize(split.size());
            std::size_t c = combo;
            std::uint64_t id = 0;
            for (std::size_t s = 0; s < split.size(); ++s) {
                for (std::size_t m = 0; m < split[s]; ++m) {
                    const double q = qvals[c % 4];
                    c /= 4;
                    table.members[s][PeerId{id++}] = q;
                    table.loads[s] += q;
                }
            }
            const auto d = rebalancer::decide(table);
            ++checked_guard;
            if (d.mover && table.members[d.from_stage].size() < 2) {
                out.ok = false;
                out.detail = "last-peer guard violated";
                return out;
            }

            // Exhaustive single-move optimizer target: send help to the stage
            // with the largest backlog, taken from the one with the smallest.
            // Only judged where load and per-peer backlog orderings agree and
            // are strict, i.e. where the optimum is unambiguous.
            if (split.size() < 2) continue;
            std::vector<std::size_t> by_load(split.size());
            for (std::size_t s = 0; s < split.size(); ++s) by_load[s] = s;
            auto load_of = [&](std::size_t s) { return table.loads[s]; };
            auto drain_of = [&](std::size_t s) {
                return table.loads[s] / static_cast<double>(split[s]);
            };
            std::sort(by_load.begin(), by_load.end(),
                      [&](std::size_t a, std::size_t b) { return load_of(a) < load_of(b); });
            bool strict = true;
            for (std::size_t i = 0; i + 1 < by_load.size(); ++i) {
                if (load_of(by_load[i]) >= load_of(by_load[i + 1]) ||
                    drain_of(by_load[i]) >= drain_of(by_load[i + 1])) {
                    strict = false;
                    break;
                }
            }
            if (!strict) continue;
            ++checked_pair;
            const std::size_t want_from = by_load.front();
            const std::size_t want_to = by_load.back();
            if (d.from_stage != want_from || d.to_stage != want_to) {
                out.ok = false;
                out.detail = "stage pair mismatch on an ordered table";
                return out;
            }
            if (d.mover) {
                // and the mover must be that stage's min-queue member
                double q_min = 1e18;
                for (const auto& [peer, q] : table.members[want_from]) q_min = std::min(q_min, q);
                if (table.members[want_from].at(*d.mover) != q_min) {
                    out.ok = false;
                    out.detail = "mover is not the min-queue member";
                    return out;
                }
            }
        }
    }
    out.detail = std::to_string(checked_guard) + " tables enumerated, " +
                 std::to_string(checked_pair) + " strict orderings matched";
    return out;
}

// --- 8. quantization --------------------------------------------------------

Outcome check_quantization() {
    std::mt19937_64 rng(2026);
    const std::size_t n = 1'000'000;
    std::vector<double> x(n);
    for (auto& v : x) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        v = (u - 0.5) * ((rng() % 11 == 0) ? 1000.0 : 2.0);
    }
    const auto q = compress::quantize_blockwise(x, 2048);
    const auto y = compress::dequantize_blockwise(q);
    double worst = 0.0;
    bool ok = true;
    for (std::size_t i = 0; i < n; ++i) {
        const double bound = 0.5 * q.absmax[i / 2048] / 127.0;
        const double err = std::fabs(y[i] - x[i]);
        worst = std::max(worst, err - bound);
        if (err > bound + 1e-12) ok = false;
    }

    Outcome out;
    out.ok = ok;
    for (const char* name : {"base", "xxlarge", "gpt3", "ours"}) {
        auto shape = cost_model::preset(name);
        shape.activation_bytes_per_element = 2.0;  // fp16 baseline
        const double fp16 = compress::payload_bits(shape, {compress::Kind::None, 1.0});
        const double int8 = compress::payload_bits(shape, {compress::Kind::Int8, 1.0});
        if (int8 * 2.0 != fp16) out.ok = false;
    }
    out.detail = out.ok ? "1e6-sample error bound holds; int8 payload is exactly half fp16"
                        : "bound exceeded by " + std::to_string(worst);
    return out;
}

// --- 9. determinism ---------------------------------------------------------

Outcome check_determinism() {
    sim::SimConfig cfg;
    cfg.n_stages = 4;
    cfg.churn = trace::generate_stationary(40, 40.0, 40.0, 2.0, 99, 4);
    cfg.forward_service_seconds = 10.0;
    cfg.duration_seconds = 2.0 * 3600.0;
    cfg.rebalance_mode = sim::RebalanceMode::Periodic;
    cfg.rebalance_period = 120.0;
    cfg.state_transfer_bytes = 625'000'000;

    Outcome out;
    for (std::uint64_t seed : {7ull, 8ull}) {
        const auto a = sim::run(cfg, seed);
        const auto b = sim::run(cfg, seed);
        if (a.event_log != b.event_log || a.throughput.completed != b.throughput.completed ||
            a.routing_snapshot_json != b.routing_snapshot_json) {
            out.ok = false;
            out.detail = "repeat run diverged for seed " + std::to_string(seed);
            return out;
        }
    }
    if (sim::run(cfg, 7).event_log == sim::run(cfg, 8).event_log) {
        out.ok = false;
        out.detail = "different seeds produced identical logs";
        return out;
    }
    if (trace::generate_stationary(100, 20.0, 20.0, 4.0, 5) !=
        trace::generate_stationary(100, 20.0, 20.0, 4.0, 5)) {
        out.ok = false;
        out.detail = "trace generation is not reproducible";
        return out;
    }
    out.detail = "event logs byte-identical per (config, seed)";
    return out;
}

// --- 10. decision cost scaling ----------------------------------------------

Outcome check_decide_scaling() {
    Outcome out;
    std::ostringstream detail;
    detail.setf(std::ios::fixed);
    detail.precision(2);
    for (std::size_t m : {64, 128}) {
        for (std::size_t s : {64, 128}) {
            const auto base = static_cast<double>(rebalancer::complexity_probe(m, s));
            const double rm = static_cast<double>(rebalancer::complexity_probe(2 * m, s)) / base;
            const double rs = static_cast<double>(rebalancer::complexity_probe(m, 2 * s)) / base;
            if (rm > 2.5 || rs > 2.5) out.ok = false;
            if (m == 128 && s == 128) detail << "peers x2 -> " << rm << ", stages x2 -> " << rs;
        }
    }
    out.detail = "op growth at 128x128: " + detail.str();
    return out;
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        Check check;
    };
    const std::vector<Criterion> criteria = {
        {"cost table reproduced within 3%", check_cost_table},
        {"square-cube doubling and utilization orderings", check_square_cube},
        {"routing shares proportional to speed", check_routing_shares},
        {"32 h churn replay mode ordering and gaps", check_churn_replay},
        {"rebalancing wins at every stage count", check_stage_scaling},
        {"chaos kill/refill never deadlocks", check_chaos},
        {"rebalance decisions match exhaustive search", check_rebalancer_exhaustive},
        {"int8 round-trip bound and payload halving", check_quantization},
        {"bit-identical reruns per config and seed", check_determinism},
        {"decision cost scales about linearly", check_decide_scaling},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome outcome;
        try {
            outcome = criteria[i].check();
        } catch (const std::exception& e) {
            outcome.ok = false;
            outcome.detail = std::string("exception: ") + e.what();
        }
        std::printf("%s %2zu. %s: %s\n", outcome.ok ? "PASS" : "FAIL", i + 1, criteria[i].name,
                    outcome.detail.c_str());
        std::fflush(stdout);
        if (!outcome.ok) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
