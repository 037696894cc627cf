#include "active/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "active/rng.hpp"

namespace active {

std::string Shape::str() const {
    std::ostringstream os;
    os << "[" << n << "," << c << "," << h << "," << w << "]";
    return os.str();
}

static std::shared_ptr<TensorImpl> make_impl(Shape s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
        throw ShapeError("negative tensor extent " + s.str());
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = s;
    impl->data.assign(static_cast<size_t>(s.numel()), 0.0);
    return impl;
}

Tensor make_tensor(std::shared_ptr<TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
}

Tensor Tensor::zeros(Shape s, bool requires_grad) {
    Tensor t = make_tensor(make_impl(s));
    if (requires_grad) t.set_requires_grad(true);
    return t;
}

Tensor Tensor::full(Shape s, double value, bool requires_grad) {
    Tensor t = zeros(s, requires_grad);
    std::fill(t.vec().begin(), t.vec().end(), value);
    return t;
}

Tensor Tensor::from_data(Shape s, std::vector<double> values, bool requires_grad) {
    if (static_cast<long long>(values.size()) != s.numel())
        throw ShapeError("data length " + std::to_string(values.size()) +
                         " does not match shape " + s.str());
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = s;
    impl->data = std::move(values);
    Tensor t = make_tensor(std::move(impl));
    if (requires_grad) t.set_requires_grad(true);
    return t;
}

Tensor Tensor::scalar(double value) {
    return from_data({1, 1, 1, 1}, {value});
}

Tensor Tensor::uniform(Shape s, double bound, Rng& rng, bool requires_grad) {
    Tensor t = zeros(s, requires_grad);
    for (double& v : t.vec()) v = rng.uniform(-bound, bound);
    return t;
}

void Tensor::set_requires_grad(bool on) {
    impl_->requires_grad = on;
    if (on) impl_->ensure_grad();
}

const std::vector<double>& Tensor::grad() const {
    impl_->ensure_grad();
    return impl_->grad;
}

void Tensor::zero_grad() {
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

double Tensor::item() const {
    if (numel() != 1)
        throw ShapeError("item() requires a single-element tensor, got " + shape().str());
    return impl_->data[0];
}

Tensor Tensor::detach() const {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = impl_->shape;
    impl->data = impl_->data;
    return make_tensor(std::move(impl));
}

// --- recording mode ---------------------------------------------------------

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

// --- reverse pass -----------------------------------------------------------

void backward(const Tensor& loss) {
    if (loss.shape() != Shape{1, 1, 1, 1})
        throw ShapeError("backward expects a scalar loss, got " + loss.shape().str());

    // Iterative postorder DFS over impls; tri-color marking detects cycles
    // (impossible through the public API, but guarded regardless).
    enum class Mark : uint8_t { Visiting, Done };
    std::unordered_map<TensorImpl*, Mark> marks;
    std::vector<TensorImpl*> order;  // postorder: inputs before outputs

    struct Frame {
        TensorImpl* impl;
        size_t next_input;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.impl().get(), 0});

    while (!stack.empty()) {
        Frame& f = stack.back();
        TensorImpl* impl = f.impl;
        if (f.next_input == 0) {
            auto it = marks.find(impl);
            if (it != marks.end()) {
                if (it->second == Mark::Visiting)
                    throw InternalError("cycle detected in computation graph");
                stack.pop_back();
                continue;
            }
            marks[impl] = Mark::Visiting;
        }
        const size_t n_inputs = impl->producer ? impl->producer->inputs.size() : 0;
        if (f.next_input < n_inputs) {
            TensorImpl* child = impl->producer->inputs[f.next_input].impl().get();
            ++f.next_input;
            auto it = marks.find(child);
            if (it != marks.end() && it->second == Mark::Visiting)
                throw InternalError("cycle detected in computation graph");
            if (it == marks.end()) stack.push_back({child, 0});
        } else {
            marks[impl] = Mark::Done;
            order.push_back(impl);
            stack.pop_back();
        }
    }

    // Interior grads are per-call scratch; only leaf buffers accumulate
    // across repeated backward calls.
    for (TensorImpl* impl : order)
        if (impl->producer && !impl->grad.empty()) impl->grad.assign(impl->grad.size(), 0.0);

    TensorImpl* root = loss.impl().get();
    root->ensure_grad();
    root->grad[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* impl = *it;
        if (impl->producer) {
            impl->ensure_grad();
            impl->producer->backward(*impl);
        }
    }
}

}  // namespace active
