#include "latadv/schedule.hpp"

#include <cmath>
#include <string>

#include "json.hpp"

#include "latadv/error.hpp"

namespace latadv {

namespace {

std::vector<int> even_steps(int total, int steps) {
  std::vector<int> out;
  if (steps <= 0) return out;
  if (steps == 1) return {total - 1};
  out.reserve(static_cast<std::size_t>(steps));
  const double stride = static_cast<double>(total - 1) / (steps - 1);
  for (int k = 0; k < steps; ++k) {
    out.push_back(static_cast<int>(std::lround(k * stride)));
  }
  return out;
}

}  // namespace

double DiffusionSchedule::level_alpha(int level) const {
  if (level < 0 || level > num_steps()) {
    throw ParameterError("level " + std::to_string(level) + " outside [0, " +
                         std::to_string(num_steps()) + "]");
  }
  if (level == 0) return 1.0;
  return alpha_bars_[static_cast<std::size_t>(inference_steps_[level - 1])];
}

int DiffusionSchedule::level_timestep(int level) const {
  if (level < 0 || level > num_steps()) {
    throw ParameterError("level " + std::to_string(level) + " outside [0, " +
                         std::to_string(num_steps()) + "]");
  }
  if (inference_steps_.empty()) return 0;
  return inference_steps_[level == 0 ? 0 : level - 1];
}

double DiffusionSchedule::terminal_inverse_sqrt_alpha() const {
  const int t = inference_steps_.empty() ? total_train_steps() - 1 : inference_steps_.back();
  return 1.0 / std::sqrt(alpha_bars_[static_cast<std::size_t>(t)]);
}

DiffusionSchedule DiffusionSchedule::with_steps(int steps) const {
  if (steps < 0 || steps > total_train_steps()) {
    throw ParameterError("steps must lie in [0, total_train_steps]");
  }
  DiffusionSchedule out = *this;
  out.params_.steps = steps;
  out.inference_steps_ = even_steps(total_train_steps(), steps);
  return out;
}

DiffusionSchedule compute_schedule(const ScheduleParams& params) {
  if (params.total_train_steps < 1) {
    throw ParameterError("total_train_steps must be positive");
  }
  if (!(params.beta_start > 0.0 && params.beta_start <= params.beta_end &&
        params.beta_end < 1.0)) {
    throw ParameterError("need 0 < beta_start <= beta_end < 1");
  }
  if (params.steps < 1 || params.steps > params.total_train_steps) {
    throw ParameterError("need 1 <= steps <= total_train_steps");
  }

  DiffusionSchedule s;
  s.params_ = params;
  const auto n = static_cast<std::size_t>(params.total_train_steps);
  s.betas_.resize(n);
  s.alpha_bars_.resize(n);
  const double lo = std::sqrt(params.beta_start);
  const double hi = std::sqrt(params.beta_end);
  double prod = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double frac = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    const double root = lo + (hi - lo) * frac;
    s.betas_[i] = root * root;
    prod *= 1.0 - s.betas_[i];
    s.alpha_bars_[i] = prod;
  }
  s.inference_steps_ = even_steps(params.total_train_steps, params.steps);
  return s;
}

void to_json(nlohmann::json& j, const ScheduleParams& p) {
  j = nlohmann::json{{"total_train_steps", p.total_train_steps},
                     {"beta_start", p.beta_start},
                     {"beta_end", p.beta_end},
                     {"T", p.steps}};
}

void from_json(const nlohmann::json& j, ScheduleParams& p) {
  j.at("total_train_steps").get_to(p.total_train_steps);
  j.at("beta_start").get_to(p.beta_start);
  j.at("beta_end").get_to(p.beta_end);
  j.at("T").get_to(p.steps);
}

}  // namespace latadv
