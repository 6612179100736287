"""Swarm-style pipeline training simulator."""

from ._swarmsim import (  # noqa: F401
    ComparisonRow,
    ConfigError,
    CostBreakdown,
    DeviceProfile,
    ExperimentResult,
    LayerShape,
    NegativePopulationError,
    NoPeerAvailable,
    ParseError,
    PeerId,
    PeerRegistry,
    QuantizedTensor,
    RebalanceDecision,
    RebalanceMode,
    RoutingState,
    SimConfig,
    SimResult,
    StageLoadTable,
    StageScalingRow,
    ThroughputSeries,
    TraceEvent,
    activation_payload_bits,
    collect_loads,
    complexity_probe,
    compressed_payload_bits,
    decide,
    default_state_transfer_bytes,
    dequantize_blockwise,
    flops_per_stage,
    generate_stationary,
    layer_norm,
    load_trace,
    maxout_k,
    oracle_throughput,
    params_per_layer,
    parse_trace,
    preset,
    preset_names,
    quantize_blockwise,
    replay_experiment,
    run,
    save_trace,
    scale_for_stages,
    serialize_trace,
    square_cube_ratio,
    stage_cost,
    stage_scaling_experiment,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
