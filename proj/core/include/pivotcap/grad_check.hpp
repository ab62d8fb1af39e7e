#pragma once

#include <functional>

#include "pivotcap/tensor.hpp"

namespace pivotcap {

// Compares the reverse-mode gradient of scalar `f` at `x` with a central
// finite-difference estimate (five-point stencil, step `eps`). Returns the
// maximum over elements of |g_ad - g_fd| / (|g_ad| + |g_fd| + 1e-12), or
// +infinity when f produces a non-finite value anywhere.
//
// `x` must be a leaf; its values are perturbed in place and restored.
double numeric_grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps = 1e-5);

}  // namespace pivotcap
