#include "latadv/models/gradient_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "latadv/models/registry.hpp"

namespace latadv {

namespace {

Tensor random_direction(const Shape& shape, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor d(shape);
  for (double& v : d.values()) v = n(rng);
  d.vec().normalize();
  return d;
}

double relative_error(double fd, double analytic) {
  return std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-10});
}

}  // namespace

GradientCheck check_classifier_gradient(const Classifier& model, const Tensor& x, int label,
                                        int probes, std::uint64_t seed, double step) {
  require_differentiable(model, "checked");
  const auto g = loss_and_input_gradient(model, x, label);
  std::mt19937_64 rng(seed);
  GradientCheck out;
  for (int p = 0; p < probes; ++p) {
    Tensor d;
    bool smooth = false;
    for (int draw = 0; draw < 10 && !smooth; ++draw) {
      d = random_direction(x.shape(), rng);
      smooth = model.smooth_between(add_scaled(x, d, -step), x) &&
               model.smooth_between(x, add_scaled(x, d, step));
      if (!smooth) ++out.skipped;
    }
    if (!smooth) {
      ++out.inconclusive;
      continue;
    }
    const double up = cross_entropy(model.logits(add_scaled(x, d, step)), label);
    const double down = cross_entropy(model.logits(add_scaled(x, d, -step)), label);
    const double fd = (up - down) / (2.0 * step);
    out.max_relative_error = std::max(out.max_relative_error, relative_error(fd, g.grad.vec().dot(d.vec())));
    ++out.probes;
  }
  return out;
}

GradientCheck check_predictor_gradient(const NoisePredictor& model, const Tensor& z, int t,
                                       const ConditionEmbedding& e, int probes,
                                       std::uint64_t seed, double step) {
  require_differentiable(model, "checked");
  std::mt19937_64 rng(seed);
  const Tensor r = random_direction(z.shape(), rng);
  const auto grads = model.vjp(z, t, e, r);
  auto objective = [&](const Tensor& zz, const Tensor& ee) {
    return r.vec().dot(model.predict(zz, t, ConditionEmbedding{ee, e.kind}).vec());
  };
  GradientCheck out;
  for (int p = 0; p < probes; ++p) {
    const Tensor dz = random_direction(z.shape(), rng);
    const double fd_z = (objective(add_scaled(z, dz, step), e.values) -
                         objective(add_scaled(z, dz, -step), e.values)) / (2.0 * step);
    const Tensor de = random_direction(e.values.shape(), rng);
    const double fd_e = (objective(z, add_scaled(e.values, de, step)) -
                         objective(z, add_scaled(e.values, de, -step))) / (2.0 * step);
    out.max_relative_error = std::max({out.max_relative_error,
                                       relative_error(fd_z, grads.latent.vec().dot(dz.vec())),
                                       relative_error(fd_e, grads.embedding.vec().dot(de.vec()))});
    ++out.probes;
  }
  return out;
}

}  // namespace latadv
