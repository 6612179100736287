#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "swarmsim/cost_model.hpp"
#include "swarmsim/peer_registry.hpp"

namespace swarmsim::rebalancer {

/// Published queue sizes as seen by one rebalancing round.
struct StageLoadTable {
    std::vector<double> loads;                        // loads[s] = sum of member queues
    std::vector<std::map<PeerId, double>> members;    // members[s][peer] = queue size

    std::size_t n_stages() const { return loads.size(); }
};

struct RebalanceDecision {
    std::optional<PeerId> mover;
    std::size_t from_stage = 0;
    std::size_t to_stage = 0;
    std::uint64_t state_transfer_bytes = 0;
};

/// Snapshot the loads visible after waiting out the straggler timeout.
/// Entries published too late to propagate by then are omitted.
StageLoadTable collect_loads(const registry::PeerRegistry& reg, double now,
                             double straggler_timeout = 5.0);

/// Pick the min-queue peer of the min-load stage and send it to the max-load
/// stage. First-encountered stage wins ties; a stage's only member never
/// moves. `op_count`, when given, accumulates elementary operation counts
/// for complexity probing.
RebalanceDecision decide(const StageLoadTable& table, std::size_t* op_count = nullptr);

/// Bytes a migrating peer must download: fp16 parameters plus Adam statistics
/// of the same footprint twice over.
std::uint64_t default_state_transfer_bytes(const cost_model::LayerShape& shape);

/// Execute a decision against the registry: the mover leaves its old stage
/// now and reappears on the new one once the state download finishes.
/// Returns the migration completion time (== now for a no-op decision).
double apply(const RebalanceDecision& decision, registry::PeerRegistry& reg, double now,
             double download_bps);

/// Operation count of decide() on a synthetic table with M peers per stage.
std::size_t complexity_probe(std::size_t peers_per_stage, std::size_t n_stages);

}  // namespace swarmsim::rebalancer
