#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "latadv/models/classifier.hpp"
#include "latadv/models/layers.hpp"

namespace latadv {

/// Architecture recipe, enough to rebuild a network before loading weights.
struct NetworkArch {
  std::string family = "conv";  // "conv" or "attention"
  std::size_t width = 8;        // conv: first-stage channels; attention: token dim
  std::size_t patch = 4;        // attention only

  friend bool operator==(const NetworkArch&, const NetworkArch&) = default;
};

void to_json(nlohmann::json& j, const NetworkArch& a);
void from_json(const nlohmann::json& j, NetworkArch& a);

/// Classifier backed by a Sequential network on HWC images.
///
///   conv:      conv3x3(c) relu pool conv3x3(2c) relu pool dense
///   attention: patchify dense(d) tanh +pos self-attention relu mean dense
class NetworkClassifier final : public Classifier {
 public:
  NetworkClassifier(NetworkArch arch, Shape input_shape, std::size_t num_classes,
                    std::uint64_t seed);

  std::size_t num_classes() const override { return num_classes_; }
  const Shape& input_shape() const override { return input_shape_; }
  Capabilities capabilities() const override { return {true, true}; }

  std::vector<double> logits(const Tensor& x) const override;
  Tensor logits_vjp(const Tensor& x, std::span<const double> grad_logits) const override;
  bool smooth_between(const Tensor& a, const Tensor& b) const override;

  const NetworkArch& arch() const { return arch_; }
  Sequential& network() { return net_; }
  const Sequential& network() const { return net_; }

 private:
  void check_input(const Tensor& x) const;

  NetworkArch arch_;
  Shape input_shape_;
  std::size_t num_classes_;
  Sequential net_;
};

struct TrainOptions {
  int epochs = 40;
  std::size_t batch = 32;
  double learning_rate = 3e-3;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const TrainOptions& t);
void from_json(const nlohmann::json& j, TrainOptions& t);

struct TrainStats {
  double final_loss = 0.0;
  double train_accuracy = 0.0;
};

/// Minibatch Adam on mean cross-entropy. Weights end rounded to float32.
TrainStats train_classifier(NetworkClassifier& model, const std::vector<Tensor>& images,
                            const std::vector<int>& labels, const TrainOptions& options);

/// Fraction of images whose predicted label equals the given one.
double accuracy(const Classifier& model, const std::vector<Tensor>& images,
                const std::vector<int>& labels);

}  // namespace latadv
