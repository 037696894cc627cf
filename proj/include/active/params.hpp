#pragma once

#include <map>
#include <string>

#include "active/rng.hpp"
#include "active/tensor.hpp"

namespace active {

// Named tensors of a model. Ordered by name so checkpoint serialization,
// optimizer iteration, and freeze masks are independent of construction
// order. Params are trainable; buffers (e.g. anchor priors) are saved but
// never updated.
struct ParamMap {
    std::map<std::string, Tensor> params;
    std::map<std::string, Tensor> buffers;

    Tensor add_param(const std::string& name, Tensor t);
    Tensor add_buffer(const std::string& name, Tensor t);
};

// Weight init: uniform in [-s, s] with s = sqrt(1/(cin*kh*kw)), seeded from
// (seed, name) so values do not depend on construction order.
Tensor conv_weight_init(int cout, int cin, int kh, int kw, const std::string& name, uint64_t seed);
// Depthwise weights: [c, 1, kh, kw], fan-in kh*kw.
Tensor depthwise_weight_init(int c, int kh, int kw, const std::string& name, uint64_t seed);
// Biases start at zero.
Tensor bias_init(int c);

// One convolution with optional bias, owning its weights and registering
// them as "<prefix>.w" / "<prefix>.b".
struct ConvLayer {
    Tensor w, b;
    int stride = 1;
    int pad = 0;

    ConvLayer() = default;
    ConvLayer(ParamMap& pm, const std::string& prefix, int cin, int cout, int k, int stride,
              int pad, bool bias, uint64_t seed);
    Tensor forward(const Tensor& x) const;
};

}  // namespace active
