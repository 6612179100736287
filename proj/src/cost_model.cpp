#include "swarmsim/cost_model.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "swarmsim/errors.hpp"

namespace swarmsim::cost_model {

void LayerShape::validate() const {
    if (d_model <= 0 || d_ffn <= 0 || n_heads <= 0 || seq_len <= 0 || batch <= 0 ||
        layers_per_stage <= 0 || activation_bytes_per_element <= 0.0) {
        throw ConfigError("LayerShape: all fields must be strictly positive");
    }
    if (d_model % n_heads != 0) {
        throw ConfigError("LayerShape: n_heads must divide d_model");
    }
}

void DeviceProfile::validate() const {
    if (effective_flops <= 0.0 || upload_bps <= 0.0 || download_bps <= 0.0) {
        throw ConfigError("DeviceProfile: flops and bandwidths must be positive");
    }
    if (rtt_seconds < 0.0) {
        throw ConfigError("DeviceProfile: rtt_seconds must be nonnegative");
    }
}

std::int64_t params_per_layer(const LayerShape& shape) {
    shape.validate();
    // QKV + output projections (4 * d^2) plus the two FFN matrices.
    return 4 * shape.d_model * shape.d_model + 2 * shape.d_model * shape.d_ffn;
}

double flops_per_stage(const LayerShape& shape, bool include_backward) {
    const double tokens = static_cast<double>(shape.batch) * static_cast<double>(shape.seq_len);
    const double fwd = 2.0 * static_cast<double>(params_per_layer(shape)) * tokens *
                       static_cast<double>(shape.layers_per_stage);
    return include_backward ? 3.0 * fwd : fwd;
}

double activation_payload_bits(const LayerShape& shape) {
    shape.validate();
    return static_cast<double>(shape.batch) * static_cast<double>(shape.seq_len) *
           static_cast<double>(shape.d_model) * shape.activation_bytes_per_element * 8.0;
}

CostBreakdown stage_cost(const LayerShape& shape, const DeviceProfile& device, bool overlap) {
    device.validate();
    CostBreakdown out;
    out.compute_seconds = flops_per_stage(shape, /*include_backward=*/true) / device.effective_flops;

    // Activations out on the forward pass, activation gradients back on the
    // backward pass, plus one round of latency for each direction.
    const double payload = activation_payload_bits(shape);
    out.comm_seconds =
        payload / device.upload_bps + payload / device.download_bps + 2.0 * device.rtt_seconds;

    out.total_seconds = overlap ? std::max(out.compute_seconds, out.comm_seconds)
                                : out.compute_seconds + out.comm_seconds;
    out.utilization = out.compute_seconds / out.total_seconds;
    out.idle_fraction = 1.0 - out.utilization;
    return out;
}

double square_cube_ratio(const LayerShape& shape) {
    return flops_per_stage(shape, /*include_backward=*/true) / activation_payload_bits(shape);
}

LayerShape preset(std::string_view name) {
    // fp16 activations except "ours", which ships 8-bit compressed activations
    // and packs 3 layers per stage.
    if (name == "base") return {768, 3072, 12, 512, 1, 1, 2.0};
    if (name == "xxlarge") return {4096, 16384, 32, 512, 1, 1, 2.0};
    if (name == "gpt3") return {12288, 49152, 96, 512, 1, 1, 2.0};
    if (name == "ours") return {4096, 16384, 32, 512, 1, 3, 1.0};
    throw ConfigError("unknown preset: " + std::string(name));
}

std::vector<std::string> preset_names() { return {"base", "xxlarge", "gpt3", "ours"}; }

LayerShape shape_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("LayerShape: ") + e.what());
    }
    LayerShape shape;
    if (j.contains("preset")) shape = preset(j.at("preset").get<std::string>());
    if (j.contains("d_model")) shape.d_model = j.at("d_model").get<std::int64_t>();
    if (j.contains("d_ffn")) shape.d_ffn = j.at("d_ffn").get<std::int64_t>();
    if (j.contains("n_heads")) shape.n_heads = j.at("n_heads").get<std::int64_t>();
    if (j.contains("seq_len")) shape.seq_len = j.at("seq_len").get<std::int64_t>();
    if (j.contains("batch")) shape.batch = j.at("batch").get<std::int64_t>();
    if (j.contains("layers_per_stage"))
        shape.layers_per_stage = j.at("layers_per_stage").get<std::int64_t>();
    if (j.contains("activation_bytes_per_element"))
        shape.activation_bytes_per_element = j.at("activation_bytes_per_element").get<double>();
    shape.validate();
    return shape;
}

}  // namespace swarmsim::cost_model
