#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "swarmsim/compression.hpp"
#include "swarmsim/cost_model.hpp"
#include "swarmsim/errors.hpp"
#include "swarmsim/peer_registry.hpp"
#include "swarmsim/rebalancer.hpp"
#include "swarmsim/sim.hpp"
#include "swarmsim/trace.hpp"
#include "swarmsim/wiring.hpp"

namespace py = pybind11;
using namespace swarmsim;

PYBIND11_MODULE(_swarmsim, m) {
    m.doc() = "Swarm-style pipeline training simulator core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<NegativePopulationError>(m, "NegativePopulationError", PyExc_ValueError);
    py::register_exception<NoPeerAvailable>(m, "NoPeerAvailable", PyExc_RuntimeError);

    py::class_<PeerId>(m, "PeerId")
        .def(py::init<std::uint64_t>(), py::arg("value") = 0)
        .def_readwrite("value", &PeerId::value)
        .def("__eq__", [](const PeerId& a, const PeerId& b) { return a == b; })
        .def("__hash__", [](const PeerId& p) { return py::hash(py::int_(p.value)); })
        .def("__repr__",
             [](const PeerId& p) { return "PeerId(" + std::to_string(p.value) + ")"; });

    // cost model -------------------------------------------------------------
    py::class_<cost_model::LayerShape>(m, "LayerShape")
        .def(py::init<>())
        .def_readwrite("d_model", &cost_model::LayerShape::d_model)
        .def_readwrite("d_ffn", &cost_model::LayerShape::d_ffn)
        .def_readwrite("n_heads", &cost_model::LayerShape::n_heads)
        .def_readwrite("seq_len", &cost_model::LayerShape::seq_len)
        .def_readwrite("batch", &cost_model::LayerShape::batch)
        .def_readwrite("layers_per_stage", &cost_model::LayerShape::layers_per_stage)
        .def_readwrite("activation_bytes_per_element",
                       &cost_model::LayerShape::activation_bytes_per_element);

    py::class_<cost_model::DeviceProfile>(m, "DeviceProfile")
        .def(py::init<>())
        .def_readwrite("effective_flops", &cost_model::DeviceProfile::effective_flops)
        .def_readwrite("upload_bps", &cost_model::DeviceProfile::upload_bps)
        .def_readwrite("download_bps", &cost_model::DeviceProfile::download_bps)
        .def_readwrite("rtt_seconds", &cost_model::DeviceProfile::rtt_seconds);

    py::class_<cost_model::CostBreakdown>(m, "CostBreakdown")
        .def_readonly("compute_seconds", &cost_model::CostBreakdown::compute_seconds)
        .def_readonly("comm_seconds", &cost_model::CostBreakdown::comm_seconds)
        .def_readonly("total_seconds", &cost_model::CostBreakdown::total_seconds)
        .def_readonly("idle_fraction", &cost_model::CostBreakdown::idle_fraction)
        .def_readonly("utilization", &cost_model::CostBreakdown::utilization);

    m.def("params_per_layer", &cost_model::params_per_layer, py::arg("shape"));
    m.def("flops_per_stage", &cost_model::flops_per_stage, py::arg("shape"),
          py::arg("include_backward"));
    m.def("activation_payload_bits", &cost_model::activation_payload_bits, py::arg("shape"));
    m.def("stage_cost", &cost_model::stage_cost, py::arg("shape"), py::arg("device"),
          py::arg("overlap") = true);
    m.def("square_cube_ratio", &cost_model::square_cube_ratio, py::arg("shape"));
    m.def("preset", &cost_model::preset, py::arg("name"));
    m.def("preset_names", &cost_model::preset_names);

    // registry / wiring / rebalancer ------------------------------------------
    py::class_<registry::PeerRegistry>(m, "PeerRegistry")
        .def(py::init<std::size_t, double, double>(), py::arg("n_stages"),
             py::arg("propagation_delay") = 1.0, py::arg("default_ttl") = 300.0)
        .def("announce",
             py::overload_cast<PeerId, std::size_t, double>(&registry::PeerRegistry::announce),
             py::arg("peer"), py::arg("stage"), py::arg("now"))
        .def("announce",
             py::overload_cast<PeerId, std::size_t, double, double>(
                 &registry::PeerRegistry::announce),
             py::arg("peer"), py::arg("stage"), py::arg("now"), py::arg("ttl"))
        .def("withdraw", &registry::PeerRegistry::withdraw, py::arg("peer"), py::arg("stage"))
        .def("publish_load", &registry::PeerRegistry::publish_load, py::arg("peer"),
             py::arg("stage"), py::arg("queue_size"), py::arg("now"))
        .def("get_stage_peers", &registry::PeerRegistry::get_stage_peers, py::arg("stage"),
             py::arg("now"))
        .def("stage_load", &registry::PeerRegistry::stage_load, py::arg("stage"), py::arg("now"))
        .def("dump_json", &registry::PeerRegistry::dump_json, py::arg("now"));

    py::class_<wiring::RoutingState>(m, "RoutingState")
        .def(py::init<std::size_t, double, double>(), py::arg("n_stages"),
             py::arg("gamma") = 0.1, py::arg("epsilon") = 1.0)
        .def("add_server", &wiring::RoutingState::add_server, py::arg("peer"), py::arg("stages"),
             py::arg("phase") = 1.0)
        .def("ban_server", &wiring::RoutingState::ban_server, py::arg("peer"))
        .def("remove_server", &wiring::RoutingState::remove_server, py::arg("peer"))
        .def("is_banned", &wiring::RoutingState::is_banned, py::arg("peer"))
        .def("choose_server", &wiring::RoutingState::choose_server, py::arg("stage"))
        .def("record_response", &wiring::RoutingState::record_response, py::arg("peer"),
             py::arg("elapsed_seconds"))
        .def("ema_of", &wiring::RoutingState::ema_of, py::arg("peer"))
        .def("priority_of", &wiring::RoutingState::priority_of, py::arg("peer"))
        .def("route_forward", &wiring::RoutingState::route_forward, py::arg("fail_oracle"))
        .def("dump_json", &wiring::RoutingState::dump_json);

    py::class_<rebalancer::StageLoadTable>(m, "StageLoadTable")
        .def(py::init<>())
        .def_readwrite("loads", &rebalancer::StageLoadTable::loads)
        .def_readwrite("members", &rebalancer::StageLoadTable::members);

    py::class_<rebalancer::RebalanceDecision>(m, "RebalanceDecision")
        .def_readonly("mover", &rebalancer::RebalanceDecision::mover)
        .def_readonly("from_stage", &rebalancer::RebalanceDecision::from_stage)
        .def_readonly("to_stage", &rebalancer::RebalanceDecision::to_stage);

    m.def("collect_loads", &rebalancer::collect_loads, py::arg("registry"), py::arg("now"),
          py::arg("straggler_timeout") = 5.0);
    m.def(
        "decide",
        [](const rebalancer::StageLoadTable& table) { return rebalancer::decide(table); },
        py::arg("table"));
    m.def("default_state_transfer_bytes", &rebalancer::default_state_transfer_bytes,
          py::arg("shape"));
    m.def("complexity_probe", &rebalancer::complexity_probe, py::arg("peers_per_stage"),
          py::arg("n_stages"));

    // traces ------------------------------------------------------------------
    py::class_<trace::TraceEvent>(m, "TraceEvent")
        .def(py::init<double, std::int64_t>(), py::arg("t") = 0.0, py::arg("delta") = 0)
        .def_readwrite("t", &trace::TraceEvent::t)
        .def_readwrite("delta", &trace::TraceEvent::delta)
        .def("__eq__",
             [](const trace::TraceEvent& a, const trace::TraceEvent& b) { return a == b; });

    m.def("load_trace", &trace::load, py::arg("path"), py::arg("min_population") = 1);
    m.def("parse_trace", &trace::parse, py::arg("text"), py::arg("min_population") = 1);
    m.def("save_trace", &trace::save, py::arg("trace"), py::arg("path"));
    m.def("serialize_trace", &trace::serialize, py::arg("trace"));
    m.def("generate_stationary", &trace::generate_stationary, py::arg("n0"),
          py::arg("leave_per_hour"), py::arg("join_per_hour"), py::arg("duration_hours"),
          py::arg("seed"), py::arg("floor") = 1, py::arg("burst") = 1);
    m.def("scale_for_stages", &trace::scale_for_stages, py::arg("trace"), py::arg("from_stages"),
          py::arg("to_stages"));

    // compression -------------------------------------------------------------
    py::class_<compress::QuantizedTensor>(m, "QuantizedTensor")
        .def_readonly("codes", &compress::QuantizedTensor::codes)
        .def_readonly("absmax", &compress::QuantizedTensor::absmax)
        .def_readonly("block_size", &compress::QuantizedTensor::block_size)
        .def("payload_bits", &compress::QuantizedTensor::payload_bits);

    m.def("quantize_blockwise", &compress::quantize_blockwise, py::arg("x"),
          py::arg("block_size") = 2048);
    m.def("dequantize_blockwise", &compress::dequantize_blockwise, py::arg("q"));
    m.def("maxout_k", &compress::maxout_k, py::arg("x"), py::arg("k"));
    m.def(
        "layer_norm",
        [](const std::vector<double>& x) { return compress::layer_norm(x); },
        py::arg("x"));
    m.def(
        "compressed_payload_bits",
        [](const cost_model::LayerShape& shape, const std::string& kind, double factor) {
            return compress::payload_bits(shape, {compress::kind_from_name(kind), factor});
        },
        py::arg("shape"), py::arg("kind"), py::arg("factor") = 1.0);

    // simulation --------------------------------------------------------------
    py::enum_<sim::RebalanceMode>(m, "RebalanceMode")
        .value("NONE", sim::RebalanceMode::None)
        .value("PERIODIC", sim::RebalanceMode::Periodic)
        .value("ORACLE", sim::RebalanceMode::Oracle);

    py::class_<sim::SimConfig>(m, "SimConfig")
        .def(py::init<>())
        .def_static("from_json", &sim::SimConfig::from_json, py::arg("json_text"))
        .def("to_json", &sim::SimConfig::to_json)
        .def_readwrite("n_stages", &sim::SimConfig::n_stages)
        .def_readwrite("churn", &sim::SimConfig::churn)
        .def_readwrite("shape", &sim::SimConfig::shape)
        .def_readwrite("device", &sim::SimConfig::device)
        .def_readwrite("overlap", &sim::SimConfig::overlap)
        .def_readwrite("forward_service_seconds", &sim::SimConfig::forward_service_seconds)
        .def_readwrite("backward_multiplier", &sim::SimConfig::backward_multiplier)
        .def_readwrite("rebalance_mode", &sim::SimConfig::rebalance_mode)
        .def_readwrite("rebalance_period", &sim::SimConfig::rebalance_period)
        .def_readwrite("state_transfer_bytes", &sim::SimConfig::state_transfer_bytes)
        .def_readwrite("duration_seconds", &sim::SimConfig::duration_seconds)
        .def_readwrite("bucket_seconds", &sim::SimConfig::bucket_seconds)
        .def_readwrite("trainers_per_peer", &sim::SimConfig::trainers_per_peer)
        .def("validate", &sim::SimConfig::validate);

    py::class_<sim::ThroughputSeries>(m, "ThroughputSeries")
        .def_readonly("bucket_seconds", &sim::ThroughputSeries::bucket_seconds)
        .def_readonly("completed", &sim::ThroughputSeries::completed)
        .def("total", &sim::ThroughputSeries::total);

    py::class_<sim::SimResult>(m, "SimResult")
        .def_readonly("throughput", &sim::SimResult::throughput)
        .def_readonly("oracle", &sim::SimResult::oracle)
        .def_readonly("event_log", &sim::SimResult::event_log)
        .def_readonly("dispatched", &sim::SimResult::dispatched)
        .def_readonly("completed", &sim::SimResult::completed)
        .def_readonly("requeued", &sim::SimResult::requeued)
        .def_readonly("abandoned", &sim::SimResult::abandoned)
        .def_readonly("starvation_recorded", &sim::SimResult::starvation_recorded)
        .def_readonly("routing_snapshot_json", &sim::SimResult::routing_snapshot_json);

    py::class_<sim::ComparisonRow>(m, "ComparisonRow")
        .def_readonly("mode", &sim::ComparisonRow::mode)
        .def_readonly("overall_pct", &sim::ComparisonRow::overall_pct)
        .def_readonly("first_hour_pct", &sim::ComparisonRow::first_hour_pct)
        .def_readonly("last_hour_pct", &sim::ComparisonRow::last_hour_pct);

    py::class_<sim::ExperimentResult>(m, "ExperimentResult")
        .def_readonly("rows", &sim::ExperimentResult::rows)
        .def_readonly("series", &sim::ExperimentResult::series);

    py::class_<sim::StageScalingRow>(m, "StageScalingRow")
        .def_readonly("n_stages", &sim::StageScalingRow::n_stages)
        .def_readonly("rebalanced_pct", &sim::StageScalingRow::rebalanced_pct)
        .def_readonly("baseline_pct", &sim::StageScalingRow::baseline_pct);

    m.def("run", &sim::run, py::arg("config"), py::arg("seed"),
          py::call_guard<py::gil_scoped_release>());
    m.def("oracle_throughput", &sim::oracle_throughput, py::arg("per_peer_rate_per_stage"),
          py::arg("total_peers"));
    m.def("replay_experiment", &sim::replay_experiment, py::arg("config"), py::arg("periods"),
          py::arg("seeds"), py::call_guard<py::gil_scoped_release>());
    m.def("stage_scaling_experiment", &sim::stage_scaling_experiment, py::arg("config"),
          py::arg("stage_counts"), py::arg("period"), py::arg("seeds"),
          py::call_guard<py::gil_scoped_release>());
}
