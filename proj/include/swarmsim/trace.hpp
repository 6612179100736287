#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace swarmsim::trace {

/// One churn event: `delta` peers join (>0) or leave (<0) at time `t`.
struct TraceEvent {
    double t = 0.0;
    std::int64_t delta = 0;
    bool operator==(const TraceEvent&) const = default;
};

using Trace = std::vector<TraceEvent>;

/// Parse a JSON-lines trace file. Throws ParseError (with the offending
/// line number) on malformed lines or decreasing timestamps, and
/// NegativePopulationError when the running population would drop below
/// `min_population`.
Trace load(const std::string& path, std::int64_t min_population = 1);
Trace parse(const std::string& text, std::int64_t min_population = 1);

void save(const Trace& trace, const std::string& path);
std::string serialize(const Trace& trace);

/// Poisson churn: leave and join events arrive independently at the given
/// hourly rates. Leaves that would sink the population below `floor` are
/// dropped. The first event (t=0) carries the initial population.
Trace generate_stationary(std::int64_t n0, double leave_per_hour, double join_per_hour,
                          double duration_hours, std::uint64_t seed, std::int64_t floor = 1,
                          std::int64_t burst = 1);

/// Scale the initial population for a different stage count; churn deltas
/// are left as-is.
Trace scale_for_stages(const Trace& t, std::size_t from_stages, std::size_t to_stages);

}  // namespace swarmsim::trace
