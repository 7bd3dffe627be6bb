#pragma once

#include "latadv/tensor.hpp"

namespace latadv {

/// Differentiable range constraint x -> (|x| - |x - 1| + 1) / 2, which is
/// exactly clamp(x, 0, 1).
double boundary_process(double x);
Tensor boundary_process(const Tensor& x);

/// Subgradient: 1 strictly inside (0, 1), 0 outside; 0.5 at the kinks.
double boundary_derivative(double x);

/// grad * boundary_derivative(x), elementwise.
Tensor boundary_vjp(const Tensor& x, const Tensor& grad);

}  // namespace latadv
