#include "latadv/attack/attack.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "latadv/diffusion.hpp"
#include "latadv/error.hpp"

namespace latadv {

std::string to_string(RhoMode mode) {
  return mode == RhoMode::unit ? "unit" : "schedule-derived";
}

RhoMode parse_rho_mode(const std::string& text) {
  if (text == "unit") return RhoMode::unit;
  if (text == "schedule-derived") return RhoMode::schedule_derived;
  throw ParameterError("unknown rho mode '" + text + "'");
}

std::string to_string(MseSign sign) { return sign == MseSign::penalize ? "penalize" : "reward"; }

MseSign parse_mse_sign(const std::string& text) {
  if (text == "penalize") return MseSign::penalize;
  if (text == "reward") return MseSign::reward;
  throw ParameterError("unknown mse sign '" + text + "'");
}

void AttackConfig::validate() const {
  if (steps < 0) throw ParameterError("T must be non-negative");
  if (inner_iterations < 0) throw ParameterError("N_i must be non-negative");
  if (attack_iterations < 0) throw ParameterError("N_a must be non-negative");
  if (!(eta > 0.0)) throw ParameterError("eta must be positive");
  if (!(kappa > 0.0)) throw ParameterError("kappa must be positive");
  if (!(mu >= 0.0)) throw ParameterError("mu must be non-negative");
  if (!(zeta > 0.0)) throw ParameterError("zeta must be positive");
  if (!std::isfinite(beta) || !std::isfinite(guidance)) {
    throw ParameterError("beta and w must be finite");
  }
}

LossWithGradient adversarial_loss_and_gradient(const Tensor& x_adv, const Tensor& x_ref, int label,
                                               const Classifier& classifier, double beta,
                                               MseSign sign) {
  require_same_shape(x_adv.shape(), x_ref.shape(), "adversarial_loss");
  auto ce = loss_and_input_gradient(classifier, x_adv, label, LossKind::cross_entropy);
  const double s = sign == MseSign::penalize ? -beta : beta;
  const double n = static_cast<double>(x_adv.numel());
  LossWithGradient out;
  out.value = ce.loss + s * mean_squared_error(x_adv, x_ref);
  out.grad = std::move(ce.grad);
  out.grad.vec() += s * (2.0 / n) * (x_adv.vec() - x_ref.vec());
  return out;
}

double adversarial_loss(const Tensor& x_adv, const Tensor& x_ref, int label,
                        const Classifier& classifier, double beta, MseSign sign) {
  require_same_shape(x_adv.shape(), x_ref.shape(), "adversarial_loss");
  const double s = sign == MseSign::penalize ? -beta : beta;
  return cross_entropy(classifier.logits(x_adv), label) + s * mean_squared_error(x_adv, x_ref);
}

double rho_value(RhoMode mode, const DiffusionSchedule& schedule) {
  return mode == RhoMode::unit ? 1.0 : schedule.terminal_inverse_sqrt_alpha();
}

SkipGradient skip_gradient(const InversionRecord& record, const BackendDescriptor& backend,
                           const Tensor& delta, const Tensor& reference,
                           const Classifier& classifier, int label, const AttackConfig& config) {
  if (!classifier.capabilities().differentiable) {
    throw CapabilityError("surrogate classifier does not provide gradients");
  }
  require_same_shape(delta.shape(), record.z_T().shape(), "perturbation");
  const Tensor z_T = add_scaled(record.z_T(), delta, 1.0);
  const auto schedule = record.diffusion_schedule();
  const Tensor z0 = denoise_full(schedule, *backend.predictor, {z_T, record.steps()},
                                 record.text_embedding, record.nulls, record.guidance_w);
  const Tensor decoded = backend.codec ? backend.codec->decode(z0) : z0;

  SkipGradient out;
  out.image = boundary_process(decoded);
  const auto loss = adversarial_loss_and_gradient(out.image, reference, label, classifier,
                                                  config.beta, config.mse_sign);
  out.loss = loss.value;
  out.predicted = predict_label(classifier, out.image);
  Tensor g = boundary_vjp(decoded, loss.grad);
  if (backend.codec) g = backend.codec->decode_vjp(z0, g);
  require_same_shape(g.shape(), z_T.shape(), "skip gradient");
  g.vec() *= rho_value(config.rho_mode, schedule);
  out.grad = std::move(g);
  return out;
}

MomentumStep momentum_update(const Tensor& g_prev, const Tensor& grad, double mu) {
  require_same_shape(g_prev.shape(), grad.shape(), "momentum_update");
  MomentumStep out;
  out.g = g_prev;
  out.g.vec() *= mu;
  const double l1 = grad.vec().lpNorm<1>();
  if (l1 > 0.0) {
    out.g.vec() += grad.vec() / l1;
  } else {
    out.stalled = true;
  }
  return out;
}

Tensor project_linf(const Tensor& delta, double kappa) {
  Tensor out(delta.shape());
  for (std::size_t i = 0; i < delta.numel(); ++i) out[i] = std::clamp(delta[i], -kappa, kappa);
  return out;
}

Tensor sign(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    out[i] = static_cast<double>((x[i] > 0.0) - (x[i] < 0.0));
  }
  return out;
}

namespace {

// δ is persisted as float32; rounding toward zero keeps the stored values
// identical to the ones used here and never pushes them past κ.
void round_to_float32_toward_zero(Tensor& t) {
  for (auto& v : t.values()) {
    float f = static_cast<float>(v);
    if (std::abs(static_cast<double>(f)) > std::abs(v)) f = std::nextafter(f, 0.0f);
    v = static_cast<double>(f);
  }
}

}  // namespace

AttackResult run_attack(const InversionRecord& record, const BackendDescriptor& backend,
                        const Classifier& surrogate, int label, const AttackConfig& config,
                        const std::vector<NamedTarget>& targets) {
  const auto start = std::chrono::steady_clock::now();
  config.validate();
  if (!backend.predictor) throw CapabilityError("backend has no noise predictor");
  require_differentiable(*backend.predictor, "backend");
  if (!surrogate.capabilities().differentiable) {
    throw CapabilityError("surrogate classifier does not provide gradients");
  }
  if (label < 0 || static_cast<std::size_t>(label) >= surrogate.num_classes()) {
    throw ParameterError("label " + std::to_string(label) + " out of range");
  }
  for (const auto& t : targets) {
    if (!t.model) throw RegistryError("target '" + t.name + "' is null");
  }

  AttackResult r;
  r.image_id = record.image_id;
  r.label = label;
  const Tensor reference = reconstruct(record, backend);
  Tensor delta(record.z_T().shape());
  Tensor g(record.z_T().shape());
  for (int k = 1; k <= config.attack_iterations; ++k) {
    const auto sg = skip_gradient(record, backend, delta, reference, surrogate, label, config);
    r.loss_trace.push_back(sg.loss);
    auto m = momentum_update(g, sg.grad, config.mu);
    g = std::move(m.g);
    if (m.stalled) ++r.stalled_iterations;
    delta = project_linf(add_scaled(delta, sign(g), config.eta), config.kappa);
    round_to_float32_toward_zero(delta);
    const double linf = delta.max_abs();
    if (linf > config.kappa) throw Error("perturbation escaped the budget");
    r.delta_linf_trace.push_back(linf);
  }

  r.adversarial_image =
      config.attack_iterations == 0
          ? reference
          : boundary_process(decode_from_terminal(record, backend, add_scaled(record.z_T(), delta, 1.0)));
  r.delta = std::move(delta);
  r.loss_trace.push_back(adversarial_loss(r.adversarial_image, reference, label, surrogate,
                                          config.beta, config.mse_sign));
  r.surrogate_prediction = predict_label(surrogate, r.adversarial_image);
  r.surrogate_success = r.surrogate_prediction != label;
  for (const auto& t : targets) {
    const int p = predict_label(*t.model, r.adversarial_image);
    r.targets.push_back({t.name, p, p != label});
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::vector<BatchItem> attack_batch(const std::vector<InversionRecord>& records,
                                    const std::vector<int>& labels,
                                    const BackendDescriptor& backend, const Classifier& surrogate,
                                    const std::vector<NamedTarget>& targets,
                                    const AttackConfig& config) {
  if (records.size() != labels.size()) throw ParameterError("records and labels differ in length");
  std::vector<BatchItem> out(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      out[i].result = run_attack(records[i], backend, surrogate, labels[i], config, targets);
    } catch (const std::exception& e) {
      out[i].error = e.what();
    }
  }
  return out;
}

}  // namespace latadv
