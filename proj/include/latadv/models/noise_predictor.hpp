#pragma once

#include <cstddef>

#include "latadv/types.hpp"

namespace latadv {

/// Gradients of <grad_out, predict(z, t, e)> with respect to z and e.
struct PredictorGradients {
  Tensor latent;
  Tensor embedding;
};

/// Noise-prediction network eps(z, t, e). `t` is a training timestep index.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;

  virtual const Shape& latent_shape() const = 0;
  virtual const Shape& embedding_shape() const = 0;
  virtual Capabilities capabilities() const = 0;

  virtual Tensor predict(const Tensor& z, int t, const ConditionEmbedding& e) const = 0;

  /// Vector-Jacobian product. Only required when capabilities().differentiable.
  virtual PredictorGradients vjp(const Tensor& z, int t, const ConditionEmbedding& e,
                                 const Tensor& grad_out) const = 0;

 protected:
  /// Throws InterfaceError when z or e disagree with the declared shapes.
  void check_inputs(const Tensor& z, const ConditionEmbedding& e) const;
};

}  // namespace latadv
