#include "active/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "active/errors.hpp"
#include "active/rng.hpp"

namespace active {

namespace {

std::vector<long long> pick_elements(long long numel, int max_checks, uint64_t seed) {
    std::vector<long long> idx(static_cast<size_t>(numel));
    std::iota(idx.begin(), idx.end(), 0ll);
    if (max_checks <= 0 || numel <= max_checks) return idx;
    Rng rng(seed);
    // partial Fisher-Yates: the first max_checks slots become the sample
    for (int i = 0; i < max_checks; ++i) {
        const long long j = i + static_cast<long long>(rng.uniform_int(static_cast<uint64_t>(numel - i)));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(static_cast<size_t>(max_checks));
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

GradCheckResult check_gradients(const std::function<Tensor()>& build,
                                const std::vector<Tensor>& leaves, double eps,
                                int max_checks_per_leaf, uint64_t sample_seed) {
    if (leaves.empty()) throw InputError("check_gradients: no leaves given");
    if (!(eps >= 1e-7 && eps <= 1e-3))
        throw InputError("check_gradients: eps must lie in [1e-7, 1e-3], got " + std::to_string(eps));
    for (const Tensor& leaf : leaves)
        if (!leaf.impl()->requires_grad)
            throw InputError("check_gradients: every leaf must have requires_grad set");

    for (const Tensor& leaf : leaves) leaf.impl()->grad.assign(leaf.impl()->grad.size(), 0.0);
    Tensor loss = build();
    if (loss.numel() != 1) throw ShapeError("check_gradients: build() must return a scalar");
    if (!std::isfinite(loss.item()))
        throw NumericalError("check_gradients: loss is not finite");
    backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (const Tensor& leaf : leaves) analytic.push_back(leaf.impl()->grad);

    GradCheckResult res;
    for (size_t li = 0; li < leaves.size(); ++li) {
        Tensor leaf = leaves[li];
        double* data = leaf.data();
        const auto elems =
            pick_elements(leaf.numel(), max_checks_per_leaf, derive_seed(sample_seed, std::to_string(li)));
        for (long long e : elems) {
            const double saved = data[e];
            double fp, fm;
            {
                NoGradGuard ng;
                data[e] = saved + eps;
                fp = build().item();
                data[e] = saved - eps;
                fm = build().item();
            }
            data[e] = saved;
            const double fd = (fp - fm) / (2.0 * eps);
            const double an = analytic[li][static_cast<size_t>(e)];
            const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
            ++res.checks;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst = "leaf " + std::to_string(li) + " elem " + std::to_string(e) + ": analytic " +
                            std::to_string(an) + " vs fd " + std::to_string(fd);
            }
        }
    }
    return res;
}

}  // namespace active
