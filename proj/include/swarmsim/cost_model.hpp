#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace swarmsim::cost_model {

/// Shape of one pipeline stage of a Transformer-style model.
struct LayerShape {
    std::int64_t d_model = 768;
    std::int64_t d_ffn = 3072;
    std::int64_t n_heads = 12;
    std::int64_t seq_len = 512;
    std::int64_t batch = 1;
    std::int64_t layers_per_stage = 1;
    double activation_bytes_per_element = 2.0;  // 4 fp32, 2 fp16, 1 int8

    void validate() const;  // throws ConfigError
};

/// Device capabilities used to turn FLOPs/bits into seconds.
struct DeviceProfile {
    double effective_flops = 1e13;  // achievable FLOP/s, calibration input
    double upload_bps = 500e6;
    double download_bps = 500e6;
    double rtt_seconds = 0.0;

    void validate() const;
};

struct CostBreakdown {
    double compute_seconds = 0.0;
    double comm_seconds = 0.0;
    double total_seconds = 0.0;
    double idle_fraction = 0.0;
    double utilization = 1.0;
};

std::int64_t params_per_layer(const LayerShape& shape);

double flops_per_stage(const LayerShape& shape, bool include_backward);

double activation_payload_bits(const LayerShape& shape);

/// Per-microbatch time breakdown for one stage (forward + backward).
/// With `overlap`, communication hides behind compute in steady state and
/// the effective time per microbatch is max(compute, comm).
CostBreakdown stage_cost(const LayerShape& shape, const DeviceProfile& device, bool overlap);

/// FLOPs-to-transferred-bits ratio; grows linearly in d_model when
/// d_ffn tracks 4*d_model.
double square_cube_ratio(const LayerShape& shape);

/// Named presets: "base", "xxlarge", "gpt3", "ours".
LayerShape preset(std::string_view name);
std::vector<std::string> preset_names();

/// Parse a LayerShape from a JSON object with the field names above;
/// missing fields keep their defaults.
LayerShape shape_from_json(const std::string& json_text);

}  // namespace swarmsim::cost_model
