#include "latadv/boundary.hpp"

#include <algorithm>
#include <cmath>

namespace latadv {

// Evaluating (|x| - |x - 1| + 1) / 2 literally can land 1 ulp outside
// [0, 1] (e.g. x = 1e-17 gives -1.1e-16); the clamp is the same function
// without the rounding.
double boundary_process(double x) { return std::clamp(x, 0.0, 1.0); }

Tensor boundary_process(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = boundary_process(x[i]);
  return out;
}

double boundary_derivative(double x) {
  // d|x|/dx = sign(x), with sign(0) = 0.
  auto sign = [](double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); };
  return (sign(x) - sign(x - 1.0)) / 2.0;
}

Tensor boundary_vjp(const Tensor& x, const Tensor& grad) {
  require_same_shape(x.shape(), grad.shape(), "boundary_vjp");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = grad[i] * boundary_derivative(x[i]);
  return out;
}

}  // namespace latadv
