#include "active/params.hpp"

#include <cmath>

#include "active/errors.hpp"
#include "active/ops.hpp"

namespace active {

Tensor ParamMap::add_param(const std::string& name, Tensor t) {
    if (params.count(name) || buffers.count(name))
        throw InternalError("duplicate parameter name: " + name);
    t.set_requires_grad(true);
    params.emplace(name, t);
    return t;
}

Tensor ParamMap::add_buffer(const std::string& name, Tensor t) {
    if (params.count(name) || buffers.count(name))
        throw InternalError("duplicate buffer name: " + name);
    buffers.emplace(name, t);
    return t;
}

Tensor conv_weight_init(int cout, int cin, int kh, int kw, const std::string& name, uint64_t seed) {
    Rng rng(derive_seed(seed, name));
    const double bound = std::sqrt(1.0 / (static_cast<double>(cin) * kh * kw));
    return Tensor::uniform({cout, cin, kh, kw}, bound, rng);
}

Tensor depthwise_weight_init(int c, int kh, int kw, const std::string& name, uint64_t seed) {
    Rng rng(derive_seed(seed, name));
    const double bound = std::sqrt(1.0 / (static_cast<double>(kh) * kw));
    return Tensor::uniform({c, 1, kh, kw}, bound, rng);
}

Tensor bias_init(int c) { return Tensor::zeros({1, c, 1, 1}); }

ConvLayer::ConvLayer(ParamMap& pm, const std::string& prefix, int cin, int cout, int k,
                     int stride, int pad, bool bias, uint64_t seed)
    : stride(stride), pad(pad) {
    w = pm.add_param(prefix + ".w", conv_weight_init(cout, cin, k, k, prefix + ".w", seed));
    if (bias) b = pm.add_param(prefix + ".b", bias_init(cout));
}

Tensor ConvLayer::forward(const Tensor& x) const { return conv2d(x, w, b, stride, pad); }

}  // namespace active
