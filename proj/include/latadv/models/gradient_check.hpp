#pragma once

#include <cstdint>

#include "latadv/models/classifier.hpp"
#include "latadv/models/noise_predictor.hpp"

namespace latadv {

/// Central-difference probes of the analytic gradient along random unit
/// directions. The relative error of one probe is
/// |fd - analytic| / max(|fd|, |analytic|, 1e-10).
/// Directions whose difference stencil crosses a kink of the model are
/// redrawn (counted in `skipped`); a probe that finds no smooth direction in
/// 10 draws is dropped as inconclusive, since the difference quotient says
/// nothing about the gradient there.
struct GradientCheck {
  double max_relative_error = 0.0;
  int probes = 0;  // scored probes
  int skipped = 0;
  int inconclusive = 0;

  bool passed(double tolerance = 1e-3) const { return max_relative_error < tolerance; }
};

GradientCheck check_classifier_gradient(const Classifier& model, const Tensor& x, int label,
                                        int probes, std::uint64_t seed, double step = 1e-4);

/// Probes f(z, e) = <r, predict(z, t, e)> for a random r, in both z and e.
GradientCheck check_predictor_gradient(const NoisePredictor& model, const Tensor& z, int t,
                                       const ConditionEmbedding& e, int probes,
                                       std::uint64_t seed, double step = 1e-4);

}  // namespace latadv
