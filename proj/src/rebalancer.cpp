#include "swarmsim/rebalancer.hpp"

#include <cmath>
#include <limits>

#include "swarmsim/errors.hpp"

namespace swarmsim::rebalancer {

StageLoadTable collect_loads(const registry::PeerRegistry& reg, double now,
                             double straggler_timeout) {
    const double read_time = now + straggler_timeout;
    StageLoadTable table;
    table.loads.assign(reg.n_stages(), 0.0);
    table.members.resize(reg.n_stages());
    for (std::size_t s = 0; s < reg.n_stages(); ++s) {
        for (const auto& [peer, load] : reg.stage_loads(s, read_time)) {
            table.members[s][peer] = load;
            table.loads[s] += load;
        }
    }
    return table;
}

RebalanceDecision decide(const StageLoadTable& table, std::size_t* op_count) {
    if (table.loads.empty()) throw ConfigError("decide: empty load table");
    std::size_t ops = 0;

    std::size_t s_min = 0, s_max = 0;
    double l_min = std::numeric_limits<double>::infinity();
    double l_max = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < table.n_stages(); ++s) {
        double load = 0.0;
        for (const auto& [peer, q] : table.members[s]) {
            load += q;
            ++ops;
        }
        ++ops;
        if (load > l_max) {
            s_max = s;
            l_max = load;
        }
        if (load < l_min) {
            s_min = s;
            l_min = load;
        }
    }

    RebalanceDecision out;
    out.from_stage = s_min;
    out.to_stage = s_max;
    if (s_min != s_max && table.members[s_min].size() > 1) {
        // Last-peer guard: a stage must keep at least one member.
        PeerId i_min{};
        double q_min = std::numeric_limits<double>::infinity();
        bool found = false;
        for (const auto& [peer, q] : table.members[s_min]) {
            ++ops;
            if (q < q_min) {
                i_min = peer;
                q_min = q;
                found = true;
            }
        }
        if (found) out.mover = i_min;
    }
    if (op_count) *op_count += ops;
    return out;
}

std::uint64_t default_state_transfer_bytes(const cost_model::LayerShape& shape) {
    const auto params = static_cast<std::uint64_t>(cost_model::params_per_layer(shape)) *
                        static_cast<std::uint64_t>(shape.layers_per_stage);
    return params * 2 /*fp16 weights*/ + params * 2 * 2 /*two optimizer moments*/;
}

double apply(const RebalanceDecision& decision, registry::PeerRegistry& reg, double now,
             double download_bps) {
    if (!decision.mover) return now;
    if (download_bps <= 0.0) throw ConfigError("apply: download_bps must be positive");
    const PeerId mover = *decision.mover;
    reg.withdraw(mover, decision.from_stage);
    const double downtime = static_cast<double>(decision.state_transfer_bytes) * 8.0 / download_bps;
    const double done = now + downtime;
    reg.announce(mover, decision.to_stage, done);
    return done;
}

std::size_t complexity_probe(std::size_t peers_per_stage, std::size_t n_stages) {
    if (peers_per_stage == 0 || n_stages == 0) {
        throw ConfigError("complexity_probe: M and S must be at least 1");
    }
    StageLoadTable table;
    table.loads.assign(n_stages, 0.0);
    table.members.resize(n_stages);
    std::uint64_t next_id = 0;
    for (std::size_t s = 0; s < n_stages; ++s) {
        for (std::size_t m = 0; m < peers_per_stage; ++m) {
            const double q = static_cast<double>((s * 31 + m * 7) % 17);
            table.members[s][PeerId{next_id++}] = q;
            table.loads[s] += q;
        }
    }
    std::size_t ops = 0;
    (void)decide(table, &ops);
    return ops;
}

}  // namespace swarmsim::rebalancer
