#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <random>
#include <vector>

#include "latadv/attack/attack.hpp"
#include "latadv/models/classifier.hpp"
#include "latadv/models/noise_predictor.hpp"
#include "latadv/models/toy_bundle.hpp"

namespace latadv::testing {

/// eps(z, t, e) = gain * z + offset + sum(e) * embed_gain, elementwise.
/// gain = 0 and offset = c gives the constant predictor.
class AffinePredictor final : public NoisePredictor {
 public:
  AffinePredictor(Shape latent, std::size_t embed_dim, double gain, double offset,
                  double embed_gain = 0.0, bool differentiable = true)
      : latent_(std::move(latent)), embed_(Shape{embed_dim}), gain_(gain), offset_(offset),
        embed_gain_(embed_gain), differentiable_(differentiable) {}

  const Shape& latent_shape() const override { return latent_; }
  const Shape& embedding_shape() const override { return embed_; }
  Capabilities capabilities() const override { return {differentiable_, true}; }

  Tensor predict(const Tensor& z, int, const ConditionEmbedding& e) const override {
    check_inputs(z, e);
    const double shift = offset_ + embed_gain_ * e.values.vec().sum();
    Tensor out(latent_);
    out.vec() = gain_ * z.vec().array() + shift;
    return out;
  }

  PredictorGradients vjp(const Tensor& z, int, const ConditionEmbedding& e,
                         const Tensor& g) const override {
    check_inputs(z, e);
    PredictorGradients out{Tensor(latent_), Tensor(embed_, embed_gain_ * g.vec().sum())};
    out.latent.vec() = gain_ * g.vec();
    return out;
  }

 private:
  Shape latent_, embed_;
  double gain_, offset_, embed_gain_;
  bool differentiable_;
};

/// logits = W x + b on a flattened input.
class LinearSoftmaxClassifier final : public Classifier {
 public:
  LinearSoftmaxClassifier(Shape input, Eigen::MatrixXd W, Eigen::VectorXd b,
                          bool differentiable = true)
      : input_(std::move(input)), W_(std::move(W)), b_(std::move(b)),
        differentiable_(differentiable) {}

  static LinearSoftmaxClassifier random(Shape input, std::size_t classes, std::uint64_t seed,
                                        double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    const auto d = static_cast<Eigen::Index>(input.numel());
    Eigen::MatrixXd W(static_cast<Eigen::Index>(classes), d);
    Eigen::VectorXd b(static_cast<Eigen::Index>(classes));
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = n(rng);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = n(rng);
    return {std::move(input), std::move(W), std::move(b)};
  }

  std::size_t num_classes() const override { return static_cast<std::size_t>(W_.rows()); }
  const Shape& input_shape() const override { return input_; }
  Capabilities capabilities() const override { return {differentiable_, true}; }
  const Eigen::MatrixXd& weights() const { return W_; }

  std::vector<double> logits(const Tensor& x) const override {
    require_same_shape(x.shape(), input_, "linear classifier");
    const Eigen::VectorXd l = W_ * x.vec() + b_;
    return {l.data(), l.data() + l.size()};
  }

  Tensor logits_vjp(const Tensor& x, std::span<const double> g) const override {
    require_same_shape(x.shape(), input_, "linear classifier");
    Tensor out(input_);
    out.vec() = W_.transpose() * Eigen::Map<const Eigen::VectorXd>(g.data(), W_.rows());
    return out;
  }

 private:
  Shape input_;
  Eigen::MatrixXd W_;
  Eigen::VectorXd b_;
  bool differentiable_;
};

/// Exact gradient of the adversarial loss with respect to z_T, by
/// backpropagating through every guided denoising step of the record.
Tensor full_graph_gradient(const InversionRecord& record, const BackendDescriptor& backend,
                           const Tensor& delta, const Tensor& reference,
                           const Classifier& classifier, int label, const AttackConfig& config);

double cosine_similarity(const Tensor& a, const Tensor& b);

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// A small bundle fitted once per process (reduced data and epochs).
const ToyBundle& small_bundle();
const LabeledImages& small_bundle_heldout();
/// The small bundle with its prior refitted for T inference steps (cached).
const ToyBundle& small_bundle_for_steps(int steps);

}  // namespace latadv::testing
