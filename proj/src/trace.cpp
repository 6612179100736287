#include "swarmsim/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "swarmsim/errors.hpp"

namespace swarmsim::trace {

namespace {

void validate(const Trace& events, std::int64_t min_population) {
    double last_t = -std::numeric_limits<double>::infinity();
    std::int64_t population = 0;
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (events[i].t < last_t) {
            throw ParseError("trace: timestamps decrease at event " + std::to_string(i + 1));
        }
        last_t = events[i].t;
        population += events[i].delta;
        if (population < min_population) {
            throw NegativePopulationError("trace: population " + std::to_string(population) +
                                          " below floor at event " + std::to_string(i + 1));
        }
    }
}

}  // namespace

Trace parse(const std::string& text, std::int64_t min_population) {
    Trace events;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            events.push_back(TraceEvent{j.at("t").get<double>(), j.at("delta").get<std::int64_t>()});
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("trace line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    validate(events, min_population);
    return events;
}

Trace load(const std::string& path, std::int64_t min_population) {
    std::ifstream f(path);
    if (!f) throw ParseError("trace: cannot open " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse(buf.str(), min_population);
}

std::string serialize(const Trace& t) {
    std::ostringstream out;
    for (const auto& e : t) {
        nlohmann::json j;
        j["t"] = e.t;
        j["delta"] = e.delta;
        out << j.dump() << "\n";
    }
    return out.str();
}

void save(const Trace& t, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ParseError("trace: cannot open " + path + " for writing");
    f << serialize(t);
}

Trace generate_stationary(std::int64_t n0, double leave_per_hour, double join_per_hour,
                          double duration_hours, std::uint64_t seed, std::int64_t floor,
                          std::int64_t burst) {
    if (n0 < floor) throw ConfigError("generate_stationary: n0 below population floor");
    if (leave_per_hour < 0.0 || join_per_hour < 0.0 || duration_hours < 0.0 || burst < 1) {
        throw ConfigError("generate_stationary: invalid parameters");
    }
    std::mt19937_64 rng(seed);
    const double horizon = duration_hours * 3600.0;

    struct Raw {
        double t;
        std::int64_t delta;
    };
    std::vector<Raw> raw;
    // Hand-rolled inverse-CDF sampling: std::exponential_distribution is
    // implementation-defined, which would break byte-for-byte reproducible
    // traces across standard libraries.
    auto exp_gap = [&](double rate) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        return -std::log1p(-u) / rate;
    };
    auto draw_arrivals = [&](double per_hour, std::int64_t delta) {
        if (per_hour <= 0.0) return;
        const double rate = per_hour / 3600.0;
        double t = exp_gap(rate);
        while (t < horizon) {
            raw.push_back(Raw{t, delta});
            t += exp_gap(rate);
        }
    };
    draw_arrivals(leave_per_hour, -burst);
    draw_arrivals(join_per_hour, burst);
    std::stable_sort(raw.begin(), raw.end(), [](const Raw& a, const Raw& b) { return a.t < b.t; });

    Trace out;
    out.push_back(TraceEvent{0.0, n0});
    std::int64_t population = n0;
    for (const Raw& r : raw) {
        if (r.delta < 0 && population + r.delta < floor) continue;  // would breach the floor
        population += r.delta;
        out.push_back(TraceEvent{r.t, r.delta});
    }
    return out;
}

Trace scale_for_stages(const Trace& t, std::size_t from_stages, std::size_t to_stages) {
    if (from_stages == 0 || to_stages == 0) {
        throw ConfigError("scale_for_stages: stage counts must be positive");
    }
    Trace out = t;
    if (!out.empty() && out.front().t == 0.0 && out.front().delta > 0) {
        const auto n0 = out.front().delta;
        out.front().delta = (n0 * static_cast<std::int64_t>(to_stages) +
                             static_cast<std::int64_t>(from_stages) - 1) /
                            static_cast<std::int64_t>(from_stages);
    }
    return out;
}

}  // namespace swarmsim::trace
