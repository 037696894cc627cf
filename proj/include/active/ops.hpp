#pragma once

#include <cstdint>
#include <vector>

#include "active/rng.hpp"
#include "active/tensor.hpp"

namespace active {

enum class Act { Sigmoid, LeakyRelu, Silu };

// Numerically stable scalar sigmoid, clamped so the result is strictly
// inside (0,1) for every finite input.
double sigmoid_value(double x);

// --- convolution family ----------------------------------------------------

// Cross-correlation. w: [Cout, Cin, kh, kw], b: [1,Cout,1,1] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);

// One filter per input channel. w: [C, 1, kh, kw].
Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, int stride, int pad);

// --- elementwise -----------------------------------------------------------

Tensor activation(const Tensor& x, Act kind, double alpha = 0.1);
inline Tensor sigmoid(const Tensor& x) { return activation(x, Act::Sigmoid); }
inline Tensor leaky_relu(const Tensor& x, double alpha = 0.1) {
    return activation(x, Act::LeakyRelu, alpha);
}
inline Tensor silu(const Tensor& x) { return activation(x, Act::Silu); }
inline Tensor relu(const Tensor& x) { return activation(x, Act::LeakyRelu, 0.0); }

// a*x + b, elementwise with scalar coefficients.
Tensor affine(const Tensor& x, double a, double b);
// exp(min(x, 40)); the clamp keeps downstream box areas finite.
Tensor exp_clamped(const Tensor& x);

Tensor add(const std::vector<Tensor>& xs);
inline Tensor add2(const Tensor& a, const Tensor& b) { return add({a, b}); }
Tensor sub2(const Tensor& a, const Tensor& b);
Tensor mul2(const Tensor& a, const Tensor& b);
Tensor div2(const Tensor& a, const Tensor& b);
Tensor min2(const Tensor& a, const Tensor& b);
Tensor max2(const Tensor& a, const Tensor& b);

// --- shape / broadcast -----------------------------------------------------

Tensor concat_channels(const std::vector<Tensor>& xs);
// x + b broadcast over (n,h,w); b: [1,C,1,1].
Tensor bias_add(const Tensor& x, const Tensor& b);
// x * s broadcast over (h,w); s: [N,C,1,1]. The SE gate.
Tensor mul_broadcast(const Tensor& x, const Tensor& s);

Tensor global_avg_pool(const Tensor& x);
Tensor upsample2x(const Tensor& x);
Tensor downsample2x(const Tensor& x);

// Values at `indices` (flat row-major offsets) as a [1,1,1,K] tensor.
Tensor gather_flat(const Tensor& x, std::vector<int64_t> indices);

Tensor sum_all(const Tensor& x);

// Stable binary cross-entropy from logits, reduced to a scalar:
//   sum_i weight_i * (max(x_i,0) - x_i*y_i + log(1+exp(-|x_i|))).
// target and weight are plain buffers of x's size; weight zeroes out
// positions that do not participate.
Tensor bce_with_logits(const Tensor& x, const std::vector<double>& target,
                       const std::vector<double>& weight);

// Training-time stochastic path drop: per batch sample, zero the whole
// tensor with probability drop_prob, else scale by 1/(1-drop_prob).
// Identity when training is false or drop_prob == 0.
Tensor drop_connect(const Tensor& x, double drop_prob, bool training, Rng& rng);

}  // namespace active
