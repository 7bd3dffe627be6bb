#pragma once

#include <span>
#include <vector>

#include "json.hpp"

namespace latadv {

struct ScheduleParams {
  int total_train_steps = 1000;
  double beta_start = 0.00085;
  double beta_end = 0.012;
  int steps = 50;  // T, number of DDIM inference steps

  friend bool operator==(const ScheduleParams&, const ScheduleParams&) = default;
};

/// Scaled-linear noise schedule plus the DDIM timestep subset.
///
/// Sampling works on "levels" 0..T. Level 0 is the clean image slot with
/// alpha = 1; level k >= 1 sits at training timestep inference_steps()[k-1].
class DiffusionSchedule {
 public:
  const ScheduleParams& params() const { return params_; }
  int total_train_steps() const { return params_.total_train_steps; }
  int num_steps() const { return static_cast<int>(inference_steps_.size()); }

  std::span<const double> betas() const { return betas_; }
  std::span<const double> alpha_bars() const { return alpha_bars_; }
  std::span<const int> inference_steps() const { return inference_steps_; }

  /// Cumulative alpha at a level; 1 for the clean slot.
  double level_alpha(int level) const;
  /// Training timestep the noise predictor is queried at for a level. The
  /// clean slot borrows the first inference timestep.
  int level_timestep(int level) const;

  /// 1 / sqrt(alpha_bar) at the last inference timestep.
  double terminal_inverse_sqrt_alpha() const;

  /// Same betas, different number of inference steps. Unlike
  /// compute_schedule this accepts 0, which yields the identity mapping.
  DiffusionSchedule with_steps(int steps) const;

  friend DiffusionSchedule compute_schedule(const ScheduleParams& params);

 private:
  ScheduleParams params_;
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
  std::vector<int> inference_steps_;
};

/// Throws ParameterError unless 0 < beta_start <= beta_end < 1 and
/// 1 <= steps <= total_train_steps.
DiffusionSchedule compute_schedule(const ScheduleParams& params);

inline DiffusionSchedule compute_schedule(int total_train_steps, double beta_start,
                                          double beta_end, int steps) {
  return compute_schedule(ScheduleParams{total_train_steps, beta_start, beta_end, steps});
}

void to_json(nlohmann::json& j, const ScheduleParams& p);
void from_json(const nlohmann::json& j, ScheduleParams& p);

}  // namespace latadv
