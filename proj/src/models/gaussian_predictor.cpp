#include "latadv/models/gaussian_predictor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "latadv/diffusion.hpp"
#include "latadv/error.hpp"

namespace latadv {

GaussianNoisePredictor::GaussianNoisePredictor(Shape latent_shape, std::vector<double> alpha_bars,
                                               GaussianPriorParams params)
    : latent_shape_(std::move(latent_shape)),
      alpha_bars_(std::move(alpha_bars)),
      params_(std::move(params)) {
  const auto n = static_cast<Eigen::Index>(latent_shape_.numel());
  if (params_.mean.size() != n || params_.basis.rows() != n ||
      params_.basis.cols() != params_.variances.size() || params_.embed_proj.rows() != n) {
    throw InterfaceError("gaussian predictor parameters disagree with latent shape " +
                         latent_shape_.str());
  }
  if (alpha_bars_.empty()) throw ParameterError("alpha_bars must not be empty");
  embedding_shape_ = Shape{static_cast<std::size_t>(params_.embed_proj.cols())};
}

GaussianNoisePredictor GaussianNoisePredictor::zeros(Shape latent_shape, std::size_t embedding_dim,
                                                     std::vector<double> alpha_bars) {
  const auto n = static_cast<Eigen::Index>(latent_shape.numel());
  GaussianPriorParams p;
  p.mean = Eigen::VectorXd::Zero(n);
  p.basis = Eigen::MatrixXd::Zero(n, n);
  p.variances = Eigen::VectorXd::Zero(n);
  p.embed_proj = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(embedding_dim));
  return {std::move(latent_shape), std::move(alpha_bars), std::move(p)};
}

double GaussianNoisePredictor::alpha_at(int t) const {
  if (t < 0 || static_cast<std::size_t>(t) >= alpha_bars_.size()) {
    throw ParameterError("timestep " + std::to_string(t) + " out of range");
  }
  return alpha_bars_[static_cast<std::size_t>(t)];
}

Eigen::VectorXd GaussianNoisePredictor::apply_gain(const Eigen::VectorXd& v, double a) const {
  Eigen::VectorXd coeff = params_.basis.transpose() * v;
  coeff.array() /= a * params_.variances.array() + (1.0 - a);
  return std::sqrt(1.0 - a) * (params_.basis * coeff);
}

Tensor GaussianNoisePredictor::predict(const Tensor& z, int t, const ConditionEmbedding& e) const {
  check_inputs(z, e);
  const double a = alpha_at(t);
  const Eigen::VectorXd centre = params_.mean + params_.embed_proj * e.values.vec();
  Tensor out(latent_shape_);
  out.vec() = apply_gain(z.vec() - std::sqrt(a) * centre, a);
  return out;
}

PredictorGradients GaussianNoisePredictor::vjp(const Tensor& z, int t, const ConditionEmbedding& e,
                                               const Tensor& grad_out) const {
  check_inputs(z, e);
  require_same_shape(grad_out.shape(), latent_shape_, "noise predictor vjp");
  const double a = alpha_at(t);
  // The gain operator is symmetric, so its transpose is itself.
  PredictorGradients g{Tensor(latent_shape_), Tensor(embedding_shape_)};
  g.latent.vec() = apply_gain(grad_out.vec(), a);
  g.embedding.vec() = -std::sqrt(a) * (params_.embed_proj.transpose() * g.latent.vec());
  return g;
}

GaussianFit fit_gaussian_prior(const std::vector<Tensor>& images, const std::vector<int>& labels,
                               int num_classes, const DiffusionSchedule& schedule,
                               const GaussianFitOptions& options) {
  if (images.empty() || images.size() != labels.size()) {
    throw ParameterError("need a non-empty, label-aligned image set");
  }
  const auto n = static_cast<Eigen::Index>(images.front().numel());
  const auto r = static_cast<Eigen::Index>(options.embedding_dim);
  if (r < 1 || r > n) throw ParameterError("embedding_dim must lie in [1, latent size]");

  Eigen::MatrixXd data(n, static_cast<Eigen::Index>(images.size()));
  for (std::size_t i = 0; i < images.size(); ++i) {
    require_same_shape(images[i].shape(), images.front().shape(), "fit_gaussian_prior");
    data.col(static_cast<Eigen::Index>(i)) = images[i].vec();
  }
  const Eigen::VectorXd mean = data.rowwise().mean();
  const Eigen::MatrixXd centred = data.colwise() - mean;
  const Eigen::MatrixXd cov = centred * centred.transpose() / static_cast<double>(data.cols());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw Error("covariance eigendecomposition failed");
  // Eigen sorts ascending; flip so column 0 is the leading direction.
  const Eigen::MatrixXd basis = eig.eigenvectors().rowwise().reverse();
  Eigen::VectorXd variances = eig.eigenvalues().reverse();
  variances = variances.cwiseMax(0.0).array() + options.shrinkage;

  // Curvature of the per-step null-embedding objective along leading
  // direction i at level k, for unit embedding gain.
  double max_curvature = 0.0;
  const double wm1 = options.guidance - 1.0;
  for (int k = 1; k <= schedule.num_steps(); ++k) {
    const double b = ddim_coefficients(schedule, k, k - 1).noise;
    const double a = schedule.alpha_bars()[static_cast<std::size_t>(schedule.level_timestep(k))];
    for (Eigen::Index i = 0; i < r; ++i) {
      const double s = variances(i);
      const double denom = a * s + 1.0 - a;
      const double curv = 2.0 / static_cast<double>(n) * b * b * wm1 * wm1 * a * s * (1.0 - a) /
                          (denom * denom);
      max_curvature = std::max(max_curvature, curv);
    }
  }
  const double gain =
      max_curvature > 0.0 ? 1.0 / std::sqrt(options.null_step * max_curvature) : 1.0;

  GaussianFit fit;
  fit.embedding_gain = gain;
  fit.params.mean = mean;
  fit.params.basis = basis;
  fit.params.variances = variances;
  const Eigen::VectorXd root = variances.head(r).cwiseSqrt();
  fit.params.embed_proj = gain * basis.leftCols(r) * root.asDiagonal();

  auto quantize = [](auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
    }
  };
  quantize(fit.params.mean);
  quantize(fit.params.basis);
  quantize(fit.params.variances);
  quantize(fit.params.embed_proj);

  for (int c = 0; c < num_classes; ++c) {
    Eigen::VectorXd class_mean = Eigen::VectorXd::Zero(n);
    int count = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
      if (labels[i] == c) {
        class_mean += images[i].vec();
        ++count;
      }
    }
    Tensor e(Shape{static_cast<std::size_t>(r)});
    if (count > 0) {
      class_mean /= count;
      e.vec() = (basis.leftCols(r).transpose() * (class_mean - mean)).cwiseQuotient(root) / gain;
    }
    round_to_float32(e.values());
    fit.class_embeddings.push_back(std::move(e));
  }
  return fit;
}

}  // namespace latadv
