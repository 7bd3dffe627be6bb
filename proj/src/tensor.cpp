#include "latadv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "latadv/error.hpp"

namespace latadv {

std::size_t Shape::numel() const {
  if (dims_.empty()) return 0;
  return std::accumulate(dims_.begin(), dims_.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string Shape::str() const {
  std::string out = "[";
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(dims_[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_.numel()) {
    throw InterfaceError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_.str());
  }
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

void require_same_shape(const Shape& a, const Shape& b, std::string_view what) {
  if (!(a == b)) {
    throw InterfaceError(std::string(what) + ": shape " + a.str() +
                         " does not match " + b.str());
  }
}

Tensor add_scaled(const Tensor& a, const Tensor& b, double scale) {
  require_same_shape(a.shape(), b.shape(), "add_scaled");
  Tensor out = a;
  out.vec() += scale * b.vec();
  return out;
}

void round_to_float32(std::span<double> values) {
  for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

double mean_squared_error(const Tensor& a, const Tensor& b) {
  require_same_shape(a.shape(), b.shape(), "mean_squared_error");
  if (a.empty()) return 0.0;
  return (a.vec() - b.vec()).squaredNorm() / static_cast<double>(a.numel());
}

double psnr_from_mse(double mse) {
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace latadv
