#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "latadv/boundary.hpp"
#include "latadv/inversion/inversion.hpp"
#include "latadv/models/classifier.hpp"
#include "latadv/models/registry.hpp"

namespace latadv {

enum class RhoMode {
  unit,
  /// 1 / sqrt(alpha_bar) at the last inference timestep.
  schedule_derived,
};

enum class MseSign {
  /// L = CE - beta * MSE: stay close to the reconstruction.
  penalize,
  /// L = CE + beta * MSE.
  reward,
};

std::string to_string(RhoMode mode);
RhoMode parse_rho_mode(const std::string& text);
std::string to_string(MseSign sign);
MseSign parse_mse_sign(const std::string& text);

struct AttackConfig {
  int steps = 50;             // T
  int inner_iterations = 10;  // N_i
  int attack_iterations = 10; // N_a
  double beta = 0.1;
  double zeta = 0.01;
  double eta = 0.04;
  double kappa = 0.1;
  double mu = 1.0;
  double guidance = 7.5;
  std::uint64_t seed = 0;
  RhoMode rho_mode = RhoMode::unit;
  MseSign mse_sign = MseSign::penalize;

  /// Throws ParameterError on eta <= 0, kappa <= 0, mu < 0, N_a < 0, ...
  void validate() const;
  InversionConfig inversion() const { return {steps, inner_iterations, zeta, guidance}; }
};

struct LossWithGradient {
  double value = 0.0;
  Tensor grad;  // with respect to x_adv
};

/// CE(classifier(x_adv), y) -/+ beta * MSE(x_adv, x_ref).
double adversarial_loss(const Tensor& x_adv, const Tensor& x_ref, int label,
                        const Classifier& classifier, double beta,
                        MseSign sign = MseSign::penalize);
LossWithGradient adversarial_loss_and_gradient(const Tensor& x_adv, const Tensor& x_ref, int label,
                                               const Classifier& classifier, double beta,
                                               MseSign sign = MseSign::penalize);

double rho_value(RhoMode mode, const DiffusionSchedule& schedule);

struct SkipGradient {
  Tensor grad;     // rho * dL/dz̄_0, in z_T coordinates
  double loss = 0.0;
  Tensor image;    // boundary-processed output at z_T + delta
  int predicted = -1;
};

/// Output-space gradient of the adversarial loss at Ω(z_T + delta), scaled
/// by rho and used directly as the z_T gradient (no backprop through the
/// denoising chain). `reference` is reconstruct(record).
SkipGradient skip_gradient(const InversionRecord& record, const BackendDescriptor& backend,
                           const Tensor& delta, const Tensor& reference,
                           const Classifier& classifier, int label, const AttackConfig& config);

struct MomentumStep {
  Tensor g;
  bool stalled = false;  // the raw gradient was identically zero
};
MomentumStep momentum_update(const Tensor& g_prev, const Tensor& grad, double mu);

Tensor project_linf(const Tensor& delta, double kappa);

/// Elementwise sign with sign(0) = 0.
Tensor sign(const Tensor& x);

struct TargetOutcome {
  std::string name;
  int predicted = -1;
  bool success = false;
};

struct AttackResult {
  std::string image_id;
  int label = -1;
  Tensor adversarial_image;
  Tensor delta;
  /// Loss at δ_0..δ_{N_a}.
  std::vector<double> loss_trace;
  /// ‖δ_k‖_∞ after each projection, k = 1..N_a.
  std::vector<double> delta_linf_trace;
  int stalled_iterations = 0;
  int surrogate_prediction = -1;
  bool surrogate_success = false;
  std::vector<TargetOutcome> targets;
  double seconds = 0.0;
};

struct NamedTarget {
  std::string name;
  const Classifier* model = nullptr;
};

/// Momentum sign ascent on δ with projection onto the κ-ball, then the
/// boundary-processed image Ω(z_T + δ). Success means predicted != label.
AttackResult run_attack(const InversionRecord& record, const BackendDescriptor& backend,
                        const Classifier& surrogate, int label, const AttackConfig& config,
                        const std::vector<NamedTarget>& targets = {});

struct BatchItem {
  std::optional<AttackResult> result;
  std::string error;  // set when the run threw
};

/// Independent run_attack per record, in input order. Failures are captured
/// per item instead of aborting the batch.
std::vector<BatchItem> attack_batch(const std::vector<InversionRecord>& records,
                                    const std::vector<int>& labels,
                                    const BackendDescriptor& backend, const Classifier& surrogate,
                                    const std::vector<NamedTarget>& targets,
                                    const AttackConfig& config);

}  // namespace latadv
