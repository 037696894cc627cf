#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "active/tensor.hpp"

namespace active {

struct GradCheckResult {
    double max_rel_err = 0.0;
    int checks = 0;
    std::string worst;  // human-readable location of the worst element

    bool ok(double tol) const { return checks > 0 && max_rel_err < tol; }
};

// Compares reverse-mode gradients of the scalar produced by `build` against
// central finite differences, perturbing elements of `leaves` in place.
// `build` must re-run the forward pass from the leaves on every call and be
// deterministic. With max_checks_per_leaf > 0 a reproducible subset of
// elements per leaf is tested; 0 tests every element.
GradCheckResult check_gradients(const std::function<Tensor()>& build,
                                const std::vector<Tensor>& leaves, double eps = 1e-5,
                                int max_checks_per_leaf = 0, uint64_t sample_seed = 1);

}  // namespace active
