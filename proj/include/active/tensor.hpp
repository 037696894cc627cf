#pragma once

#include <memory>
#include <string>
#include <vector>

#include "active/errors.hpp"

namespace active {

// Dense 4-D extents, (batch, channels, height, width), row-major storage.
struct Shape {
    int n = 0, c = 0, h = 0, w = 0;

    long long numel() const {
        return static_cast<long long>(n) * c * h * w;
    }
    bool operator==(const Shape& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }
    std::string str() const;
};

struct TensorImpl;
class Tensor;

// One recorded operation. Nodes hold their inputs; outputs hold the node,
// so the recorded graph is acyclic by construction.
struct OpNode {
    std::string kind;
    std::vector<Tensor> inputs;

    virtual ~OpNode() = default;
    // Reads out.grad and accumulates d(loss)/d(input) into each input that
    // participates in the gradient flow.
    virtual void backward(TensorImpl& out) = 0;
};

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated for requires_grad leaves, lazily elsewhere
    bool requires_grad = false;
    std::shared_ptr<OpNode> producer;

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
    }
    // True when backward must deliver a gradient here: either the caller asked
    // for one or the tensor is an interior node of the recorded graph.
    bool wants_grad() const { return requires_grad || producer != nullptr; }
};

class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape s, bool requires_grad = false);
    static Tensor full(Shape s, double value, bool requires_grad = false);
    static Tensor from_data(Shape s, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value);
    // Uniform in [-bound, bound].
    static Tensor uniform(Shape s, double bound, class Rng& rng, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    long long numel() const { return impl_->shape.numel(); }

    double* data() { return impl_->data.data(); }
    const double* data() const { return impl_->data.data(); }
    std::vector<double>& vec() { return impl_->data; }
    const std::vector<double>& vec() const { return impl_->data; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool on);
    // Gradient buffer; zeros of matching shape if backward never reached it.
    const std::vector<double>& grad() const;
    void zero_grad();

    double at(int n, int c, int y, int x) const { return impl_->data[index(n, c, y, x)]; }
    double& at(int n, int c, int y, int x) { return impl_->data[index(n, c, y, x)]; }

    long long index(int n, int c, int y, int x) const {
        const Shape& s = impl_->shape;
        return ((static_cast<long long>(n) * s.c + c) * s.h + y) * s.w + x;
    }

    // Value of a 1x1x1x1 tensor.
    double item() const;

    bool wants_grad() const { return impl_->wants_grad(); }
    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

    // Same data, no producer, no grad requirement. Severs the graph.
    Tensor detach() const;

  private:
    friend Tensor make_tensor(std::shared_ptr<TensorImpl> impl);
    std::shared_ptr<TensorImpl> impl_;
};

// Internal factory used by op implementations.
Tensor make_tensor(std::shared_ptr<TensorImpl> impl);

// Reverse-mode pass from a scalar loss. Populates grad buffers of every
// requires_grad tensor reachable through the recorded graph.
void backward(const Tensor& loss);

// Thread-local switch for graph recording. Inference paths wrap themselves
// in a NoGradGuard so forward ops run without building nodes.
bool grad_enabled();

class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

}  // namespace active
