#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "latadv/types.hpp"

namespace latadv {

enum class LossKind {
  cross_entropy,
  /// max_{j != y} logit_j - logit_y
  logit_margin,
};

/// Image classifier F(x) producing unnormalized logits.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::size_t num_classes() const = 0;
  virtual const Shape& input_shape() const = 0;
  virtual Capabilities capabilities() const = 0;

  virtual std::vector<double> logits(const Tensor& x) const = 0;

  /// d<grad_logits, logits(x)>/dx. Only required when differentiable.
  virtual Tensor logits_vjp(const Tensor& x, std::span<const double> grad_logits) const = 0;

  /// False if the model has a kink (e.g. a ReLU switching) between a and b.
  /// Finite-difference checks skip such segments. Smooth models keep the default.
  virtual bool smooth_between(const Tensor& /*a*/, const Tensor& /*b*/) const { return true; }
};

std::vector<double> softmax(std::span<const double> logits);
double cross_entropy(std::span<const double> logits, int label);
int argmax(std::span<const double> values);

/// Loss value and its gradient with respect to the logits.
struct LogitLoss {
  double value = 0.0;
  std::vector<double> grad;
};
LogitLoss logit_loss(std::span<const double> logits, int label, LossKind kind);

int predict_label(const Classifier& model, const Tensor& x);

/// Loss of the classifier at x and its gradient w.r.t. x. Throws ParameterError
/// for a label outside [0, num_classes) and CapabilityError when the model is
/// not differentiable.
struct InputGradient {
  double loss = 0.0;
  Tensor grad;
};
InputGradient loss_and_input_gradient(const Classifier& model, const Tensor& x, int label,
                                      LossKind kind = LossKind::cross_entropy);

inline Tensor input_gradient(const Classifier& model, const Tensor& x, int label,
                             LossKind kind = LossKind::cross_entropy) {
  return loss_and_input_gradient(model, x, label, kind).grad;
}

}  // namespace latadv
