#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swarmsim/cost_model.hpp"

namespace swarmsim::compress {

/// Blockwise int8 tensor: symmetric codes in [-127, 127] scaled per block
/// by the block's absolute maximum.
struct QuantizedTensor {
    std::vector<std::int8_t> codes;
    std::vector<double> absmax;  // one per block, last block may be short
    std::size_t block_size = 2048;

    std::size_t n_blocks() const { return absmax.size(); }
    /// Wire size: one byte per code plus a float32 scale per block.
    std::uint64_t payload_bits() const { return codes.size() * 8 + n_blocks() * 32; }
};

QuantizedTensor quantize_blockwise(const std::vector<double>& x, std::size_t block_size = 2048);
std::vector<double> dequantize_blockwise(const QuantizedTensor& q);

/// Max over each non-overlapping window of k features; k must divide the
/// input length.
std::vector<double> maxout_k(const std::vector<double>& x, std::size_t k);

struct LayerNormParams {
    std::vector<double> gain;  // empty = all ones
    std::vector<double> bias;  // empty = all zeros
    double epsilon = 1e-5;
};

std::vector<double> layer_norm(const std::vector<double>& x, const LayerNormParams& params = {});

/// Sending side of the bottleneck: LayerNorm then an m x c down-projection.
/// The transmitted vector has length c.
std::vector<double> bottleneck_forward(const std::vector<double>& x,
                                       const std::vector<std::vector<double>>& w_c,
                                       const LayerNormParams& params = {});

/// Receiving side: c x m up-projection.
std::vector<double> bottleneck_decompress(const std::vector<double>& y,
                                          const std::vector<std::vector<double>>& w_d);

enum class Kind { None, Int8, Bottleneck, Maxout };

struct CompressionSpec {
    Kind kind = Kind::None;
    double factor = 1.0;  // c/m for bottleneck, k for maxout; ignored otherwise

    void validate() const;
};

Kind kind_from_name(const std::string& name);
std::string kind_name(Kind k);

/// Per-microbatch activation payload under a compression scheme, in bits.
/// This is what the cost model consumes; int8 counts 8 bits per element so
/// it is exactly half of an fp16 payload.
double payload_bits(const cost_model::LayerShape& shape, const CompressionSpec& spec);

}  // namespace swarmsim::compress
