#include "swarmsim/compression.hpp"

#include <algorithm>
#include <cmath>

#include "swarmsim/errors.hpp"

namespace swarmsim::compress {

QuantizedTensor quantize_blockwise(const std::vector<double>& x, std::size_t block_size) {
    if (block_size == 0) throw ConfigError("quantize_blockwise: block_size must be positive");
    for (double v : x) {
        if (!std::isfinite(v)) throw ConfigError("quantize_blockwise: non-finite input");
    }
    QuantizedTensor q;
    q.block_size = block_size;
    q.codes.resize(x.size());
    for (std::size_t begin = 0; begin < x.size(); begin += block_size) {
        const std::size_t end = std::min(begin + block_size, x.size());
        double absmax = 0.0;
        for (std::size_t i = begin; i < end; ++i) absmax = std::max(absmax, std::fabs(x[i]));
        q.absmax.push_back(absmax);
        for (std::size_t i = begin; i < end; ++i) {
            const double code = absmax > 0.0 ? std::round(127.0 * x[i] / absmax) : 0.0;
            q.codes[i] = static_cast<std::int8_t>(std::clamp(code, -127.0, 127.0));
        }
    }
    return q;
}

std::vector<double> dequantize_blockwise(const QuantizedTensor& q) {
    std::vector<double> x(q.codes.size());
    for (std::size_t i = 0; i < q.codes.size(); ++i) {
        x[i] = static_cast<double>(q.codes[i]) * q.absmax[i / q.block_size] / 127.0;
    }
    return x;
}

std::vector<double> maxout_k(const std::vector<double>& x, std::size_t k) {
    if (k == 0 || x.size() % k != 0) {
        throw ConfigError("maxout_k: k must divide the input length");
    }
    std::vector<double> out(x.size() / k);
    for (std::size_t j = 0; j < out.size(); ++j) {
        double m = x[j * k];
        for (std::size_t i = 1; i < k; ++i) m = std::max(m, x[j * k + i]);
        out[j] = m;
    }
    return out;
}

std::vector<double> layer_norm(const std::vector<double>& x, const LayerNormParams& params) {
    if (x.empty()) throw ConfigError("layer_norm: empty input");
    if (!params.gain.empty() && params.gain.size() != x.size()) {
        throw ConfigError("layer_norm: gain size mismatch");
    }
    if (!params.bias.empty() && params.bias.size() != x.size()) {
        throw ConfigError("layer_norm: bias size mismatch");
    }
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    const double inv = 1.0 / std::sqrt(var + params.epsilon);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = (x[i] - mean) * inv;
        if (!params.gain.empty()) out[i] *= params.gain[i];
        if (!params.bias.empty()) out[i] += params.bias[i];
    }
    return out;
}

namespace {

std::vector<double> matvec(const std::vector<double>& x,
                           const std::vector<std::vector<double>>& w, const char* who) {
    if (w.size() != x.size()) throw ConfigError(std::string(who) + ": weight row count mismatch");
    const std::size_t cols = w.empty() ? 0 : w.front().size();
    std::vector<double> out(cols, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (w[i].size() != cols) throw ConfigError(std::string(who) + ": ragged weight matrix");
        for (std::size_t j = 0; j < cols; ++j) out[j] += x[i] * w[i][j];
    }
    return out;
}

}  // namespace

std::vector<double> bottleneck_forward(const std::vector<double>& x,
                                       const std::vector<std::vector<double>>& w_c,
                                       const LayerNormParams& params) {
    return matvec(layer_norm(x, params), w_c, "bottleneck_forward");
}

std::vector<double> bottleneck_decompress(const std::vector<double>& y,
                                          const std::vector<std::vector<double>>& w_d) {
    return matvec(y, w_d, "bottleneck_decompress");
}

void CompressionSpec::validate() const {
    switch (kind) {
        case Kind::None:
        case Kind::Int8:
            break;
        case Kind::Bottleneck:
            if (factor <= 0.0 || factor > 1.0) {
                throw ConfigError("CompressionSpec: bottleneck factor must be in (0,1]");
            }
            break;
        case Kind::Maxout:
            if (factor < 1.0 || factor != std::floor(factor)) {
                throw ConfigError("CompressionSpec: maxout factor must be an integer >= 1");
            }
            break;
    }
}

Kind kind_from_name(const std::string& name) {
    if (name == "none") return Kind::None;
    if (name == "int8") return Kind::Int8;
    if (name == "bottleneck") return Kind::Bottleneck;
    if (name == "maxout") return Kind::Maxout;
    throw ConfigError("unknown compression kind: " + name);
}

std::string kind_name(Kind k) {
    switch (k) {
        case Kind::None: return "none";
        case Kind::Int8: return "int8";
        case Kind::Bottleneck: return "bottleneck";
        case Kind::Maxout: return "maxout";
    }
    return "none";
}

double payload_bits(const cost_model::LayerShape& shape, const CompressionSpec& spec) {
    spec.validate();
    const double elements = static_cast<double>(shape.batch) *
                            static_cast<double>(shape.seq_len) *
                            static_cast<double>(shape.d_model);
    const double base_bits = elements * shape.activation_bytes_per_element * 8.0;
    switch (spec.kind) {
        case Kind::None: return base_bits;
        case Kind::Int8: return elements * 8.0;
        case Kind::Bottleneck: return base_bits * spec.factor;
        case Kind::Maxout: return base_bits / spec.factor;
    }
    return base_bits;
}

}  // namespace swarmsim::compress
