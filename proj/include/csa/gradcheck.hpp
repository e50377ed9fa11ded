#pragma once

#include <functional>

#include "csa/tensor.hpp"

namespace csa {

// Compares the tape gradient of f at x against central differences, coordinate
// by coordinate, and returns the worst relative error
//   |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
// f must rebuild its graph from x's current value on every call and return a
// scalar. x's persistent grad is left zeroed; grads of any other parameters f
// touches are polluted and must be reset by the caller.
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, Tensor& x,
                               double eps = 1e-5);

}  // namespace csa
