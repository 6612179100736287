#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "swarmsim/cost_model.hpp"
#include "swarmsim/trace.hpp"

namespace swarmsim::sim {

enum class RebalanceMode { None, Periodic, Oracle };

std::string mode_name(RebalanceMode mode, double period);

struct PeerSpec {
    double speed = 1.0;  // service-rate multiplier relative to the base device
};

struct SimConfig {
    std::size_t n_stages = 4;
    /// Explicit initial placement; when empty, the trace's t=0 event is
    /// spread round-robin across stages.
    std::vector<std::vector<PeerSpec>> initial_peers;
    trace::Trace churn;

    cost_model::LayerShape shape = cost_model::preset("ours");
    cost_model::DeviceProfile device;
    bool overlap = true;
    /// Seconds for one forward visit by a speed-1 peer. When unset it is
    /// derived from stage_cost (forward = 1/3 of fwd+bwd time).
    std::optional<double> forward_service_seconds;
    double backward_multiplier = 2.0;

    RebalanceMode rebalance_mode = RebalanceMode::None;
    double rebalance_period = 300.0;
    double straggler_timeout = 5.0;
    double propagation_delay = 1.0;
    double announce_ttl = 300.0;
    std::optional<std::uint64_t> state_transfer_bytes;  // default from the cost model

    double duration_seconds = 3600.0;
    double bucket_seconds = 60.0;
    std::size_t trainers_per_peer = 1;
    /// Periodic stage-wide stall standing in for gradient All-Reduce.
    double allreduce_period = 0.0;
    double allreduce_stall = 0.0;

    double forward_visit_seconds() const;
    std::uint64_t transfer_bytes() const;
    void validate() const;

    static SimConfig from_json(const std::string& json_text);
    std::string to_json() const;
};

struct ThroughputSeries {
    double bucket_seconds = 60.0;
    std::vector<double> completed;  // per-bucket completed microbatches

    double total() const;
};

struct SimResult {
    ThroughputSeries throughput;
    ThroughputSeries oracle;  // best-possible completions given live peers
    std::vector<std::string> event_log;  // JSON lines
    std::uint64_t dispatched = 0;
    std::uint64_t completed = 0;
    std::uint64_t requeued = 0;
    std::uint64_t abandoned = 0;
    bool starvation_recorded = false;
    std::string routing_snapshot_json;  // one surviving trainer's state
};

SimResult run(const SimConfig& config, std::uint64_t seed);

/// Best steady-state pipeline rate for `total_peers` identical peers given
/// per-stage per-peer rates: integer water-filling of min_s(count_s * rate_s).
double oracle_throughput(const std::vector<double>& per_peer_rate_per_stage,
                         std::int64_t total_peers);

struct ComparisonRow {
    std::string mode;
    double overall_pct = 0.0;
    double first_hour_pct = 0.0;
    double last_hour_pct = 0.0;
};

struct ExperimentResult {
    std::vector<ComparisonRow> rows;
    // Seed-averaged series per mode, same order as rows.
    std::vector<ThroughputSeries> series;
    ThroughputSeries oracle_series;
};

/// Trace-driven rebalancing comparison: modes none / T=period for each
/// given period / oracle, averaged over seeds.
ExperimentResult replay_experiment(const SimConfig& base, const std::vector<double>& periods,
                                   const std::vector<std::uint64_t>& seeds);

struct StageScalingRow {
    std::size_t n_stages = 0;
    double rebalanced_pct = 0.0;
    double baseline_pct = 0.0;
};

/// Fig.-6-style scaling: grow the stage count (and the initial population
/// proportionally) and compare rebalancing against no rebalancing.
std::vector<StageScalingRow> stage_scaling_experiment(const SimConfig& base,
                                                      const std::vector<std::size_t>& stage_counts,
                                                      double period,
                                                      const std::vector<std::uint64_t>& seeds);

}  // namespace swarmsim::sim
