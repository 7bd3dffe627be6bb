#include "latadv/models/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "latadv/error.hpp"

namespace latadv {

std::string_view to_string(EmbeddingKind kind) {
  return kind == EmbeddingKind::null ? "null" : "text";
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

double cross_entropy(std::span<const double> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw ParameterError("label " + std::to_string(label) + " out of range");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  return mx + std::log(sum) - logits[static_cast<std::size_t>(label)];
}

int argmax(std::span<const double> values) {
  return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
}

LogitLoss logit_loss(std::span<const double> logits, int label, LossKind kind) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw ParameterError("label " + std::to_string(label) + " out of range");
  }
  const auto y = static_cast<std::size_t>(label);
  LogitLoss out;
  out.grad.assign(logits.size(), 0.0);
  switch (kind) {
    case LossKind::cross_entropy: {
      out.value = cross_entropy(logits, label);
      out.grad = softmax(logits);
      out.grad[y] -= 1.0;
      break;
    }
    case LossKind::logit_margin: {
      std::size_t best = logits.size();
      double best_value = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < logits.size(); ++j) {
        if (j != y && logits[j] > best_value) {
          best_value = logits[j];
          best = j;
        }
      }
      if (best == logits.size()) break;  // single class: margin undefined, zero loss
      out.value = best_value - logits[y];
      out.grad[best] = 1.0;
      out.grad[y] = -1.0;
      break;
    }
  }
  return out;
}

int predict_label(const Classifier& model, const Tensor& x) {
  return argmax(model.logits(x));
}

InputGradient loss_and_input_gradient(const Classifier& model, const Tensor& x, int label,
                                      LossKind kind) {
  if (!model.capabilities().differentiable) {
    throw CapabilityError("classifier does not provide input gradients");
  }
  if (label < 0 || static_cast<std::size_t>(label) >= model.num_classes()) {
    throw ParameterError("label " + std::to_string(label) + " out of range");
  }
  const auto logits = model.logits(x);
  auto loss = logit_loss(logits, label, kind);
  return {loss.value, model.logits_vjp(x, loss.grad)};
}

}  // namespace latadv
