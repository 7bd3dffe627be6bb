#pragma once

#include <vector>

#include <Eigen/Core>

#include "latadv/models/noise_predictor.hpp"
#include "latadv/schedule.hpp"

namespace latadv {

/// Parameters of a Gaussian image prior N(mean + embed_proj * e, U diag(variances) U^T).
struct GaussianPriorParams {
  Eigen::VectorXd mean;
  Eigen::MatrixXd basis;       // columns are orthonormal directions
  Eigen::VectorXd variances;   // one per basis column
  Eigen::MatrixXd embed_proj;  // latent_dim x embedding_dim
};

/// Posterior-mean noise predictor of a Gaussian prior:
///
///   eps(z, t, e) = sqrt(1 - a) * U diag(1 / (a s + 1 - a)) U^T (z - sqrt(a) m(e)),
///   m(e) = mean + embed_proj * e,  a = alpha_bar[t].
///
/// It is the minimum-MSE noise estimate when images follow the prior, which
/// makes it the closed-form optimum of the usual denoising objective. The
/// prediction is affine in both z and e.
class GaussianNoisePredictor final : public NoisePredictor {
 public:
  GaussianNoisePredictor(Shape latent_shape, std::vector<double> alpha_bars,
                         GaussianPriorParams params);

  /// All-zero weights; predicts zero noise everywhere.
  static GaussianNoisePredictor zeros(Shape latent_shape, std::size_t embedding_dim,
                                      std::vector<double> alpha_bars);

  const Shape& latent_shape() const override { return latent_shape_; }
  const Shape& embedding_shape() const override { return embedding_shape_; }
  Capabilities capabilities() const override { return {true, true}; }

  Tensor predict(const Tensor& z, int t, const ConditionEmbedding& e) const override;
  PredictorGradients vjp(const Tensor& z, int t, const ConditionEmbedding& e,
                         const Tensor& grad_out) const override;

  const GaussianPriorParams& params() const { return params_; }
  std::span<const double> alpha_bars() const { return alpha_bars_; }

 private:
  double alpha_at(int t) const;
  /// sqrt(1 - a) * U diag(1 / (a s + 1 - a)) U^T v
  Eigen::VectorXd apply_gain(const Eigen::VectorXd& v, double a) const;

  Shape latent_shape_;
  Shape embedding_shape_;
  std::vector<double> alpha_bars_;
  GaussianPriorParams params_;
};

struct GaussianFitOptions {
  std::size_t embedding_dim = 32;
  /// Added to every covariance eigenvalue.
  double shrinkage = 0.05;
  /// Guidance scale and step size the embedding gain is calibrated for.
  double guidance = 7.5;
  double null_step = 0.01;
};

struct GaussianFit {
  GaussianPriorParams params;
  /// Embedding per class, in units of the calibrated embedding gain.
  std::vector<Tensor> class_embeddings;
  double embedding_gain = 1.0;
};

/// Fits the prior to flattened images: pooled mean and shrunk covariance,
/// an embedding space spanned by the leading whitened principal directions,
/// and class embeddings that place m(e_c) at the class means (as far as the
/// embedding space reaches). The null embedding is the zero vector.
///
/// The embedding gain is chosen so that the steepest per-timestep
/// null-embedding objective under `schedule` has curvature 1 / null_step,
/// i.e. plain gradient descent with that step is stable and monotone.
GaussianFit fit_gaussian_prior(const std::vector<Tensor>& images, const std::vector<int>& labels,
                               int num_classes, const DiffusionSchedule& schedule,
                               const GaussianFitOptions& options);

}  // namespace latadv
