#pragma once

#include <span>

#include "latadv/models/noise_predictor.hpp"
#include "latadv/schedule.hpp"
#include "latadv/types.hpp"

namespace latadv {

/// Classifier-free guidance: w * eps(z, t, cond) + (1 - w) * eps(z, t, null).
/// With w == 1 (or w == 0) only one branch is evaluated.
Tensor cfg_predict(const NoisePredictor& model, const Tensor& z, int t,
                   const ConditionEmbedding& cond, const ConditionEmbedding& null, double w);

/// Deterministic DDIM transition between cumulative alphas:
///   z' = sqrt(alpha_to / alpha_from) * z + c * eps,
///   c  = sqrt(alpha_to) * (sqrt(1/alpha_to - 1) - sqrt(1/alpha_from - 1)).
struct StepCoefficients {
  double latent = 1.0;
  double noise = 0.0;
};
StepCoefficients ddim_coefficients(double alpha_from, double alpha_to);
StepCoefficients ddim_coefficients(const DiffusionSchedule& schedule, int from_level,
                                   int to_level);

Tensor ddim_transition(const Tensor& z, const Tensor& eps, double alpha_from, double alpha_to);

/// One inversion step (level -> level + 1) using the plain conditional
/// prediction at the current latent.
LatentState ddim_invert_step(const DiffusionSchedule& schedule, const NoisePredictor& model,
                             const LatentState& z, const ConditionEmbedding& cond);

/// One guided denoising step (level -> level - 1).
LatentState ddim_denoise_step(const DiffusionSchedule& schedule, const NoisePredictor& model,
                              const LatentState& z, const ConditionEmbedding& cond,
                              const ConditionEmbedding& null_t, double w);

/// sqrt(alpha) * z0 + sqrt(1 - alpha) * eps.
Tensor forward_diffuse(const Tensor& z0, double alpha_bar, const Tensor& eps);
Tensor forward_diffuse(const DiffusionSchedule& schedule, const Tensor& z0, int t,
                       const Tensor& eps);

/// Guided DDIM from level T down to the clean slot. nulls[k - 1] is used on
/// the step that leaves level k.
Tensor denoise_full(const DiffusionSchedule& schedule, const NoisePredictor& model,
                    const LatentState& z_T, const ConditionEmbedding& cond,
                    std::span<const ConditionEmbedding> nulls, double w);

}  // namespace latadv
