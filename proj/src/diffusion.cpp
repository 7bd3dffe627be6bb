#include "latadv/diffusion.hpp"

#include <cmath>
#include <string>

#include "latadv/error.hpp"

namespace latadv {

void NoisePredictor::check_inputs(const Tensor& z, const ConditionEmbedding& e) const {
  require_same_shape(z.shape(), latent_shape(), "noise predictor latent");
  require_same_shape(e.values.shape(), embedding_shape(), "noise predictor embedding");
}

Tensor cfg_predict(const NoisePredictor& model, const Tensor& z, int t,
                   const ConditionEmbedding& cond, const ConditionEmbedding& null, double w) {
  require_same_shape(cond.values.shape(), model.embedding_shape(), "cfg_predict condition");
  require_same_shape(null.values.shape(), model.embedding_shape(), "cfg_predict null");
  if (w == 1.0) return model.predict(z, t, cond);
  if (w == 0.0) return model.predict(z, t, null);
  Tensor out = model.predict(z, t, cond);
  const Tensor uncond = model.predict(z, t, null);
  out.vec() = w * out.vec() + (1.0 - w) * uncond.vec();
  return out;
}

StepCoefficients ddim_coefficients(double alpha_from, double alpha_to) {
  if (!(alpha_from > 0.0 && alpha_from <= 1.0 && alpha_to > 0.0 && alpha_to <= 1.0)) {
    throw ParameterError("cumulative alphas must lie in (0, 1]");
  }
  StepCoefficients c;
  c.latent = std::sqrt(alpha_to / alpha_from);
  c.noise = std::sqrt(alpha_to) *
            (std::sqrt(1.0 / alpha_to - 1.0) - std::sqrt(1.0 / alpha_from - 1.0));
  return c;
}

StepCoefficients ddim_coefficients(const DiffusionSchedule& schedule, int from_level,
                                   int to_level) {
  return ddim_coefficients(schedule.level_alpha(from_level), schedule.level_alpha(to_level));
}

Tensor ddim_transition(const Tensor& z, const Tensor& eps, double alpha_from, double alpha_to) {
  require_same_shape(z.shape(), eps.shape(), "ddim_transition");
  const auto c = ddim_coefficients(alpha_from, alpha_to);
  Tensor out(z.shape());
  out.vec() = c.latent * z.vec() + c.noise * eps.vec();
  return out;
}

LatentState ddim_invert_step(const DiffusionSchedule& schedule, const NoisePredictor& model,
                             const LatentState& z, const ConditionEmbedding& cond) {
  if (z.level < 0 || z.level >= schedule.num_steps()) {
    throw ParameterError("cannot invert from level " + std::to_string(z.level));
  }
  const Tensor eps = model.predict(z.values, schedule.level_timestep(z.level), cond);
  return {ddim_transition(z.values, eps, schedule.level_alpha(z.level),
                          schedule.level_alpha(z.level + 1)),
          z.level + 1};
}

LatentState ddim_denoise_step(const DiffusionSchedule& schedule, const NoisePredictor& model,
                              const LatentState& z, const ConditionEmbedding& cond,
                              const ConditionEmbedding& null_t, double w) {
  if (z.level < 1 || z.level > schedule.num_steps()) {
    throw ParameterError("cannot denoise from level " + std::to_string(z.level));
  }
  const Tensor eps =
      cfg_predict(model, z.values, schedule.level_timestep(z.level), cond, null_t, w);
  return {ddim_transition(z.values, eps, schedule.level_alpha(z.level),
                          schedule.level_alpha(z.level - 1)),
          z.level - 1};
}

Tensor forward_diffuse(const Tensor& z0, double alpha_bar, const Tensor& eps) {
  require_same_shape(z0.shape(), eps.shape(), "forward_diffuse");
  if (!(alpha_bar >= 0.0 && alpha_bar <= 1.0)) {
    throw ParameterError("alpha_bar must lie in [0, 1]");
  }
  Tensor out(z0.shape());
  out.vec() = std::sqrt(alpha_bar) * z0.vec() + std::sqrt(1.0 - alpha_bar) * eps.vec();
  return out;
}

Tensor forward_diffuse(const DiffusionSchedule& schedule, const Tensor& z0, int t,
                       const Tensor& eps) {
  if (t < 0 || t >= schedule.total_train_steps()) {
    throw ParameterError("timestep " + std::to_string(t) + " out of range");
  }
  return forward_diffuse(z0, schedule.alpha_bars()[static_cast<std::size_t>(t)], eps);
}

Tensor denoise_full(const DiffusionSchedule& schedule, const NoisePredictor& model,
                    const LatentState& z_T, const ConditionEmbedding& cond,
                    std::span<const ConditionEmbedding> nulls, double w) {
  const int steps = schedule.num_steps();
  if (static_cast<int>(nulls.size()) != steps) {
    throw ParameterError("expected " + std::to_string(steps) + " null embeddings, got " +
                         std::to_string(nulls.size()));
  }
  if (z_T.level != steps) {
    throw ParameterError("denoise_full expects a latent at the terminal level");
  }
  LatentState z = z_T;
  while (z.level > 0) {
    z = ddim_denoise_step(schedule, model, z, cond, nulls[static_cast<std::size_t>(z.level - 1)],
                          w);
  }
  return std::move(z.values);
}

}  // namespace latadv
