#include "swarmsim/wiring.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "swarmsim/errors.hpp"

namespace swarmsim::wiring {

RoutingState::RoutingState(std::size_t n_stages, double gamma, double epsilon)
    : queues_(n_stages), ema_sum_(n_stages, 0.0), ema_count_(n_stages, 0),
      vtime_(n_stages, 0.0), gamma_(gamma), epsilon_(epsilon) {
    if (n_stages == 0) throw ConfigError("RoutingState: need at least one stage");
    if (gamma <= 0.0 || gamma > 1.0) throw ConfigError("RoutingState: gamma must be in (0,1]");
    if (epsilon <= 0.0) throw ConfigError("RoutingState: epsilon must be positive");
}

void RoutingState::push_entry(PeerState& st, PeerId peer) {
    for (std::size_t s : st.stages) {
        queues_[s].push(HeapEntry{st.priority, peer, st.version});
    }
}

void RoutingState::detach_from_aggregates(PeerState& st) {
    if (st.banned) return;
    for (std::size_t s : st.stages) {
        ema_sum_[s] -= st.ema;
        ema_count_[s] -= 1;
    }
}

void RoutingState::add_server(PeerId peer, const std::set<std::size_t>& stages_served,
                              double phase) {
    for (std::size_t s : stages_served) {
        if (s >= queues_.size()) throw ConfigError("add_server: stage index out of range");
    }
    if (phase < 0.0 || phase > 1.0) throw ConfigError("add_server: phase must be in [0,1]");
    PeerState& st = peers_[peer];
    detach_from_aggregates(st);  // re-add: drop the stale contribution first
    // Seed the newcomer's weight from its stage-mates: starting at epsilon
    // while incumbents carry realistic (much larger) EMAs would hand it
    // nearly all traffic until its own EMA caught up, and a pessimistic
    // (max) seed would leave it idle for just as long since the EMA is only
    // corrected when the peer is actually picked.
    double ema_sum = 0.0;
    std::size_t ema_n = 0;
    for (std::size_t s : stages_served) {
        ema_sum += ema_sum_[s];
        ema_n += ema_count_[s];
    }
    st.ema = ema_n > 0 ? ema_sum / static_cast<double>(ema_n) : epsilon_;
    // Join `phase` of a round behind the virtual time. Entering at the
    // virtual time itself would make the newcomer the next pick of every
    // stage it serves, concentrating a burst of traffic on one peer.
    double vmax = 0.0;
    for (std::size_t s : stages_served) vmax = std::max(vmax, vtime_[s]);
    st.priority = std::max(epsilon_, vmax + phase * st.ema);
    st.banned = false;
    st.version += 1;
    st.stages.assign(stages_served.begin(), stages_served.end());
    for (std::size_t s : st.stages) {
        ema_sum_[s] += st.ema;
        ema_count_[s] += 1;
    }
    push_entry(st, peer);
}

void RoutingState::ban_server(PeerId peer) {
    auto it = peers_.find(peer);
    if (it == peers_.end()) throw ConfigError("ban_server: unknown peer");
    detach_from_aggregates(it->second);
    it->second.banned = true;
    it->second.version += 1;  // stale heap entries become unreachable
}

void RoutingState::remove_server(PeerId peer) {
    auto it = peers_.find(peer);
    if (it == peers_.end()) return;
    detach_from_aggregates(it->second);
    peers_.erase(it);  // stale heap entries are skipped lazily
}

bool RoutingState::is_banned(PeerId peer) const {
    auto it = peers_.find(peer);
    return it != peers_.end() && it->second.banned;
}

PeerId RoutingState::choose_server(std::size_t stage) {
    if (stage >= queues_.size()) throw ConfigError("choose_server: stage index out of range");
    MinHeap& q = queues_[stage];
    while (!q.empty()) {
        HeapEntry top = q.top();
        auto it = peers_.find(top.peer);
        if (it == peers_.end() || it->second.banned || it->second.version != top.version) {
            q.pop();  // lazy-deleted entry
            continue;
        }
        PeerState& st = it->second;
        q.pop();
        vtime_[stage] = st.priority;
        st.priority += st.ema;
        st.version += 1;
        push_entry(st, top.peer);
        return top.peer;
    }
    throw NoPeerAvailable("no unbanned peer serves stage " + std::to_string(stage));
}

void RoutingState::record_response(PeerId peer, double elapsed_seconds) {
    if (elapsed_seconds <= 0.0) throw ConfigError("record_response: elapsed must be positive");
    auto it = peers_.find(peer);
    if (it == peers_.end()) throw ConfigError("record_response: unknown peer");
    PeerState& st = it->second;
    const double updated = gamma_ * elapsed_seconds + (1.0 - gamma_) * st.ema;
    if (!st.banned) {
        for (std::size_t s : st.stages) ema_sum_[s] += updated - st.ema;
    }
    st.ema = updated;
}

double RoutingState::ema_of(PeerId peer) const {
    auto it = peers_.find(peer);
    if (it == peers_.end()) throw ConfigError("ema_of: unknown peer");
    return it->second.ema;
}

double RoutingState::priority_of(PeerId peer) const {
    auto it = peers_.find(peer);
    if (it == peers_.end()) throw ConfigError("priority_of: unknown peer");
    return it->second.priority;
}

std::vector<PeerId> RoutingState::route_forward(
    const std::function<bool(PeerId, std::size_t)>& fail_oracle) {
    std::vector<PeerId> route;
    route.reserve(queues_.size());
    for (std::size_t stage = 0; stage < queues_.size(); ++stage) {
        for (;;) {
            PeerId peer = choose_server(stage);  // throws when the stage is exhausted
            if (fail_oracle && fail_oracle(peer, stage)) {
                ban_server(peer);
                continue;  // retry the same stage
            }
            route.push_back(peer);
            break;
        }
    }
    return route;
}

std::string RoutingState::dump_json() const {
    nlohmann::json j;
    j["gamma"] = gamma_;
    j["epsilon"] = epsilon_;
    j["peers"] = nlohmann::json::object();
    for (const auto& [peer, st] : peers_) {
        nlohmann::json p;
        p["ema"] = st.ema;
        p["priority"] = st.priority;
        p["banned"] = st.banned;
        p["stages"] = st.stages;
        j["peers"][std::to_string(peer.value)] = std::move(p);
    }
    return j.dump();
}

}  // namespace swarmsim::wiring
