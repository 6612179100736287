#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "swarmsim/compression.hpp"
#include "swarmsim/cost_model.hpp"
#include "swarmsim/errors.hpp"
#include "swarmsim/sim.hpp"
#include "swarmsim/trace.hpp"

namespace fs = std::filesystem;
using namespace swarmsim;

namespace {

constexpr const char* kVersion = "swarmsim 0.1.0";

struct ModeSpec {
    sim::RebalanceMode mode;
    double period;
    std::string name;
};

ModeSpec parse_mode(const std::string& text) {
    if (text == "none") return {sim::RebalanceMode::None, 0.0, "none"};
    if (text == "oracle") return {sim::RebalanceMode::Oracle, 0.0, "oracle"};
    if (text.rfind("T=", 0) == 0) {
        const double period = std::stod(text.substr(2));
        return {sim::RebalanceMode::Periodic, period, text};
    }
    throw ConfigError("unknown mode '" + text + "' (expected none, T=<seconds>, oracle)");
}

std::string sanitize(const std::string& name) {
    std::string out = name;
    std::replace(out.begin(), out.end(), '=', '_');
    return out;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + path.string());
    f << content;
}

std::string format_csv_value(double v) {
    std::ostringstream s;
    s.precision(10);
    s << v;
    return s.str();
}

std::string series_csv(const sim::ThroughputSeries& series) {
    std::ostringstream out;
    out << "bucket_start_s,completed\n";
    for (std::size_t i = 0; i < series.completed.size(); ++i) {
        out << format_csv_value(static_cast<double>(i) * series.bucket_seconds) << ","
            << format_csv_value(series.completed[i]) << "\n";
    }
    return out.str();
}

double window_sum(const std::vector<double>& v, std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t i = a; i < b && i < v.size(); ++i) s += v[i];
    return s;
}

int cmd_simulate(const std::string& config_path, std::vector<std::uint64_t> seeds,
                 std::vector<std::string> mode_names, const std::string& out_dir, bool inspect) {
    std::ifstream cf(config_path);
    if (!cf) {
        std::cerr << "error: cannot open config " << config_path << "\n";
        return 2;
    }
    std::ostringstream buf;
    buf << cf.rdbuf();
    sim::SimConfig base = sim::SimConfig::from_json(buf.str());

    // Resolve a trace path relative to the config file.
    nlohmann::json cj = nlohmann::json::parse(buf.str());
    if (cj.contains("trace")) {
        fs::path tp = cj.at("trace").get<std::string>();
        if (tp.is_relative()) tp = fs::path(config_path).parent_path() / tp;
        if (!fs::exists(tp)) {
            std::cerr << "error: trace file not found: " << tp.string() << "\n";
            return 2;
        }
        base.churn = trace::load(tp.string());
    }
    if (seeds.empty()) seeds = {0};
    if (mode_names.empty()) mode_names = {"none", "T=300", "T=60", "oracle"};
    std::vector<ModeSpec> modes;
    for (const auto& m : mode_names) modes.push_back(parse_mode(m));

    fs::create_directories(out_dir);
    base.validate();

    struct RunOut {
        sim::SimResult result;
    };
    const std::size_t hour_buckets =
        static_cast<std::size_t>(std::llround(3600.0 / base.bucket_seconds));

    bool starvation_seen = false;
    std::ostringstream comparison;
    comparison << "mode,overall_pct,first_hour_pct,last_hour_pct\n";

    const std::size_t max_workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    for (const ModeSpec& mode : modes) {
        sim::SimConfig cfg = base;
        cfg.rebalance_mode = mode.mode;
        cfg.rebalance_period = mode.period > 0 ? mode.period : cfg.rebalance_period;

        std::vector<sim::SimResult> results(seeds.size());
        for (std::size_t begin = 0; begin < seeds.size(); begin += max_workers) {
            const std::size_t end = std::min(begin + max_workers, seeds.size());
            std::vector<std::future<sim::SimResult>> futures;
            for (std::size_t i = begin; i < end; ++i) {
                futures.push_back(std::async(std::launch::async,
                                             [&cfg, seed = seeds[i]] { return sim::run(cfg, seed); }));
            }
            for (std::size_t i = begin; i < end; ++i) results[i] = futures[i - begin].get();
        }

        sim::ThroughputSeries avg;
        double overall = 0.0, first = 0.0, last = 0.0;
        for (std::size_t i = 0; i < results.size(); ++i) {
            const auto& r = results[i];
            starvation_seen = starvation_seen || r.starvation_recorded;
            const std::size_t n = r.throughput.completed.size();
            if (avg.completed.empty()) {
                avg.bucket_seconds = r.throughput.bucket_seconds;
                avg.completed.assign(n, 0.0);
            }
            for (std::size_t b = 0; b < n; ++b) {
                avg.completed[b] += r.throughput.completed[b] / static_cast<double>(results.size());
            }
            auto pct = [&](std::size_t a, std::size_t b) {
                const double o = window_sum(r.oracle.completed, a, b);
                return o > 0.0 ? 100.0 * window_sum(r.throughput.completed, a, b) / o : 100.0;
            };
            overall += pct(0, n);
            first += pct(0, hour_buckets);
            last += pct(n > hour_buckets ? n - hour_buckets : 0, n);

            std::ostringstream log;
            for (const auto& line : r.event_log) log << line << "\n";
            write_file(fs::path(out_dir) / ("events_" + sanitize(mode.name) + "_seed" +
                                            std::to_string(seeds[i]) + ".jsonl"),
                       log.str());
            if (inspect && i == 0 && !r.routing_snapshot_json.empty()) {
                write_file(fs::path(out_dir) / ("routing_" + sanitize(mode.name) + ".json"),
                           r.routing_snapshot_json);
            }
        }
        const auto k = static_cast<double>(results.size());
        comparison << mode.name << "," << format_csv_value(overall / k) << ","
                   << format_csv_value(first / k) << "," << format_csv_value(last / k) << "\n";
        write_file(fs::path(out_dir) / ("throughput_" + sanitize(mode.name) + ".csv"),
                   series_csv(avg));
    }
    write_file(fs::path(out_dir) / "comparison.csv", comparison.str());

    nlohmann::json manifest;
    manifest["tool"] = kVersion;
    manifest["config_path"] = config_path;
    manifest["config"] = nlohmann::json::parse(base.to_json());
    manifest["seeds"] = seeds;
    manifest["modes"] = mode_names;
    const auto now = std::chrono::system_clock::now();
    manifest["wall_clock_unix_s"] =
        std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
    write_file(fs::path(out_dir) / "manifest.json", manifest.dump(2) + "\n");

    return starvation_seen ? 1 : 0;
}

int cmd_costmodel(const std::string& preset_name, double bandwidth_bps, double effective_flops,
                  const std::vector<double>& rtt_ms, const std::string& compression,
                  double factor) {
    std::vector<std::string> names =
        preset_name == "all" ? cost_model::preset_names() : std::vector<std::string>{preset_name};
    compress::CompressionSpec spec;
    spec.kind = compress::kind_from_name(compression);
    spec.factor = factor;

    std::cout << "preset,rtt_ms,compute_s,comm_s,utilization\n";
    for (const auto& name : names) {
        cost_model::LayerShape shape = cost_model::preset(name);
        // Re-express the compressed payload as effective bytes per element.
        const double elements = static_cast<double>(shape.batch) *
                                static_cast<double>(shape.seq_len) *
                                static_cast<double>(shape.d_model);
        shape.activation_bytes_per_element = compress::payload_bits(shape, spec) / elements / 8.0;
        for (double rtt : rtt_ms) {
            cost_model::DeviceProfile device;
            device.effective_flops = effective_flops;
            device.upload_bps = bandwidth_bps;
            device.download_bps = bandwidth_bps;
            device.rtt_seconds = rtt / 1000.0;
            const auto cost = cost_model::stage_cost(shape, device, /*overlap=*/false);
            std::cout << name << "," << format_csv_value(rtt) << ","
                      << format_csv_value(cost.compute_seconds) << ","
                      << format_csv_value(cost.comm_seconds) << ","
                      << format_csv_value(cost.utilization) << "\n";
        }
    }
    return 0;
}

int cmd_payload(const std::string& preset_name, double bottleneck_factor, std::int64_t maxout_k) {
    std::vector<std::string> names =
        preset_name == "all" ? cost_model::preset_names() : std::vector<std::string>{preset_name};
    std::cout << "preset,compression,payload_bits\n";
    for (const auto& name : names) {
        const auto shape = cost_model::preset(name);
        const std::vector<compress::CompressionSpec> specs = {
            {compress::Kind::None, 1.0},
            {compress::Kind::Int8, 1.0},
            {compress::Kind::Bottleneck, bottleneck_factor},
            {compress::Kind::Maxout, static_cast<double>(maxout_k)},
        };
        for (const auto& spec : specs) {
            std::cout << name << "," << compress::kind_name(spec.kind) << ","
                      << format_csv_value(compress::payload_bits(shape, spec)) << "\n";
        }
    }
    return 0;
}

int cmd_trace_gen(std::int64_t n0, double leave_rate, double join_rate, double hours,
                  std::uint64_t seed, std::int64_t floor, std::int64_t burst,
                  const std::string& out_path) {
    const auto t = trace::generate_stationary(n0, leave_rate, join_rate, hours, seed, floor, burst);
    trace::save(t, out_path);
    std::cout << "wrote " << t.size() << " events to " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Swarm-style pipeline training simulator: stochastic wiring, adaptive "
                 "rebalancing and a compute/communication cost model on a deterministic "
                 "discrete-event engine"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    // simulate
    std::string config_path, out_dir = "out";
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> modes;
    bool inspect = false;
    auto* simulate = app.add_subcommand("simulate", "Run trace-driven simulations");
    simulate->add_option("config", config_path, "SimConfig JSON file")->required();
    simulate->add_option("--seeds", seeds, "Random seeds")->delimiter(',');
    simulate->add_option("--modes", modes, "Rebalance modes (none, T=<sec>, oracle)")
        ->delimiter(',');
    simulate->add_option("--out", out_dir, "Output directory");
    simulate->add_flag("--inspect", inspect, "Dump a routing-state snapshot per mode");

    // costmodel
    std::string preset_name = "all";
    double bandwidth = 500e6, eff_flops = 1e13, bottleneck_factor = 0.5;
    std::int64_t maxout = 2;
    std::vector<double> rtt_ms = {0.0, 10.0, 50.0, 100.0, 200.0};
    std::string compression = "none";
    auto* costmodel = app.add_subcommand("costmodel", "Print utilization across presets");
    costmodel->add_option("--preset", preset_name, "Preset name or 'all'");
    costmodel->add_option("--bandwidth", bandwidth, "Link bandwidth, bits/s");
    costmodel->add_option("--effective-flops", eff_flops, "Calibrated device FLOP/s");
    costmodel->add_option("--rtt", rtt_ms, "RTT grid in milliseconds")->delimiter(',');
    costmodel->add_option("--compression", compression, "none|int8|bottleneck|maxout");
    costmodel->add_option("--factor", bottleneck_factor, "Bottleneck c/m or maxout k");

    // payload
    std::string payload_preset = "all";
    auto* payload = app.add_subcommand("payload", "Bits per microbatch per compression scheme");
    payload->add_option("--preset", payload_preset, "Preset name or 'all'");
    payload->add_option("--bottleneck-factor", bottleneck_factor, "c/m ratio");
    payload->add_option("--maxout-k", maxout, "Maxout window");

    // trace-gen
    std::int64_t n0 = 400, floor = 4, burst = 1;
    double leave_rate = 4.0, join_rate = 4.0, hours = 32.0;
    std::uint64_t seed = 0;
    std::string trace_out = "trace.jsonl";
    auto* trace_gen = app.add_subcommand("trace-gen", "Generate a stationary churn trace");
    trace_gen->add_option("--n0", n0, "Initial population");
    trace_gen->add_option("--leave-rate", leave_rate, "Preemptions per hour");
    trace_gen->add_option("--join-rate", join_rate, "Joins per hour");
    trace_gen->add_option("--hours", hours, "Trace duration, hours");
    trace_gen->add_option("--seed", seed, "Generator seed");
    trace_gen->add_option("--floor", floor, "Population floor");
    trace_gen->add_option("--burst", burst, "Peers per churn event");
    trace_gen->add_option("--out", trace_out, "Output .jsonl path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) {
            return cmd_simulate(config_path, seeds, modes, out_dir, inspect);
        }
        if (costmodel->parsed()) {
            const double factor = compression == "maxout" ? static_cast<double>(maxout)
                                                          : bottleneck_factor;
            return cmd_costmodel(preset_name, bandwidth, eff_flops, rtt_ms, compression, factor);
        }
        if (payload->parsed()) {
            return cmd_payload(payload_preset, bottleneck_factor, maxout);
        }
        if (trace_gen->parsed()) {
            return cmd_trace_gen(n0, leave_rate, join_rate, hours, seed, floor, burst, trace_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
