#include "latadv/models/network_classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "latadv/error.hpp"

namespace latadv {

void to_json(nlohmann::json& j, const NetworkArch& a) {
  j = {{"family", a.family}, {"width", a.width}, {"patch", a.patch}};
}

void from_json(const nlohmann::json& j, NetworkArch& a) {
  j.at("family").get_to(a.family);
  j.at("width").get_to(a.width);
  j.at("patch").get_to(a.patch);
}

NetworkClassifier::NetworkClassifier(NetworkArch arch, Shape input_shape, std::size_t num_classes,
                                     std::uint64_t seed)
    : arch_(std::move(arch)), input_shape_(std::move(input_shape)), num_classes_(num_classes) {
  if (input_shape_.rank() != 3) throw ParameterError("classifier input must be HWC");
  if (num_classes_ < 2) throw ParameterError("need at least two classes");
  const std::size_t h = input_shape_[0], w = input_shape_[1], c = input_shape_[2];
  const std::size_t k = arch_.width;
  if (arch_.family == "conv") {
    net_.add(std::make_unique<Conv2d>(h, w, c, k));
    net_.add(std::make_unique<Relu>(h * w * k));
    net_.add(std::make_unique<AvgPool2>(h, w, k));
    net_.add(std::make_unique<Conv2d>(h / 2, w / 2, k, 2 * k));
    net_.add(std::make_unique<Relu>(h * w * k / 2));
    net_.add(std::make_unique<AvgPool2>(h / 2, w / 2, 2 * k));
    net_.add(std::make_unique<Dense>(h * w * k / 8, num_classes_));
  } else if (arch_.family == "attention") {
    auto patches = std::make_unique<Patchify>(h, w, c, arch_.patch);
    const std::size_t n = patches->tokens(), dim = patches->token_dim();
    net_.add(std::move(patches));
    net_.add(std::make_unique<Dense>(dim, k, n));
    net_.add(std::make_unique<Tanh>(n * k));
    net_.add(std::make_unique<PositionalAdd>(n * k));
    net_.add(std::make_unique<SelfAttention>(n, k));
    net_.add(std::make_unique<Relu>(n * k));
    net_.add(std::make_unique<MeanTokens>(n, k));
    net_.add(std::make_unique<Dense>(k, num_classes_));
  } else {
    throw ParameterError("unknown network family '" + arch_.family + "'");
  }
  net_.init_params(seed);
  round_to_float32(net_.params());
}

void NetworkClassifier::check_input(const Tensor& x) const {
  require_same_shape(x.shape(), input_shape_, "classifier input");
}

std::vector<double> NetworkClassifier::logits(const Tensor& x) const {
  check_input(x);
  return net_.forward(x.values());
}

Tensor NetworkClassifier::logits_vjp(const Tensor& x, std::span<const double> grad_logits) const {
  check_input(x);
  if (grad_logits.size() != num_classes_) throw InterfaceError("logit gradient has wrong length");
  auto din = net_.backward(
      x.values(),
      [&](std::span<const double>) {
        return std::vector<double>(grad_logits.begin(), grad_logits.end());
      },
      {});
  return Tensor(input_shape_, std::move(din));
}

bool NetworkClassifier::smooth_between(const Tensor& a, const Tensor& b) const {
  check_input(a);
  check_input(b);
  return net_.same_activation_pattern(a.values(), b.values());
}

TrainStats train_classifier(NetworkClassifier& model, const std::vector<Tensor>& images,
                            const std::vector<int>& labels, const TrainOptions& options) {
  if (images.empty() || images.size() != labels.size()) {
    throw ParameterError("need a non-empty, label-aligned training set");
  }
  if (options.batch == 0 || options.learning_rate <= 0.0) {
    throw ParameterError("batch and learning rate must be positive");
  }
  Sequential& net = model.network();
  const std::size_t np = net.param_count();
  std::vector<double> m(np, 0.0), v(np, 0.0), grad(np);
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainStats stats;
  long step = 0;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch) {
      const std::size_t stop = std::min(order.size(), start + options.batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = start; i < stop; ++i) {
        const std::size_t idx = order[i];
        net.backward(
            images[idx].values(),
            [&](std::span<const double> logits) {
              auto l = logit_loss(logits, labels[idx], LossKind::cross_entropy);
              loss_sum += l.value;
              return l.grad;
            },
            grad);
      }
      const double scale = 1.0 / static_cast<double>(stop - start);
      ++step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      auto params = net.params();
      for (std::size_t p = 0; p < np; ++p) {
        const double g = grad[p] * scale;
        m[p] = beta1 * m[p] + (1.0 - beta1) * g;
        v[p] = beta2 * v[p] + (1.0 - beta2) * g * g;
        params[p] -= options.learning_rate * (m[p] / c1) / (std::sqrt(v[p] / c2) + eps);
      }
    }
    stats.final_loss = loss_sum / static_cast<double>(images.size());
  }
  round_to_float32(net.params());
  stats.train_accuracy = accuracy(model, images, labels);
  return stats;
}

double accuracy(const Classifier& model, const std::vector<Tensor>& images,
                const std::vector<int>& labels) {
  if (images.empty() || images.size() != labels.size()) {
    throw ParameterError("need a non-empty, label-aligned image set");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (predict_label(model, images[i]) == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(images.size());
}

}  // namespace latadv
