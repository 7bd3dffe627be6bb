#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace latadv {

/// A differentiable map between flat vectors of fixed size. Parameters live
/// in the owning Sequential's flat buffer; a layer only sees its slice.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t input_size() const = 0;
  virtual std::size_t output_size() const = 0;
  virtual std::size_t param_count() const { return 0; }

  virtual void init_params(std::span<double> params, std::mt19937_64& rng) const;

  virtual void forward(std::span<const double> params, std::span<const double> in,
                       std::span<double> out) const = 0;

  /// Writes d loss / d in into `din` and accumulates parameter gradients
  /// into `dparams` when it is non-empty.
  virtual void backward(std::span<const double> params, std::span<const double> in,
                        std::span<const double> out, std::span<const double> dout,
                        std::span<double> din, std::span<double> dparams) const = 0;
};

/// Same-padded 3x3 convolution over an HWC image.
class Conv2d final : public Layer {
 public:
  Conv2d(std::size_t height, std::size_t width, std::size_t in_channels, std::size_t out_channels);
  std::string kind() const override { return "conv3x3"; }
  std::size_t input_size() const override { return h_ * w_ * cin_; }
  std::size_t output_size() const override { return h_ * w_ * cout_; }
  std::size_t param_count() const override { return cout_ * 9 * cin_ + cout_; }
  void init_params(std::span<double> params, std::mt19937_64& rng) const override;
  void forward(std::span<const double> params, std::span<const double> in,
               std::span<double> out) const override;
  void backward(std::span<const double> params, std::span<const double> in,
                std::span<const double> out, std::span<const double> dout, std::span<double> din,
                std::span<double> dparams) const override;

 private:
  std::size_t h_, w_, cin_, cout_;
};

/// 2x2 average pooling over an HWC image with even sides.
class AvgPool2 final : public Layer {
 public:
  AvgPool2(std::size_t height, std::size_t width, std::size_t channels);
  std::string kind() const override { return "avgpool2"; }
  std::size_t input_size() const override { return h_ * w_ * c_; }
  std::size_t output_size() const override { return h_ * w_ * c_ / 4; }
  void forward(std::span<const double> params, std::span<const double> in,
               std::span<double> out) const override;
  void backward(std::span<const double> params, std::span<const double> in,
                std::span<const double> out, std::span<const double> dout, std::span<double> din,
                std::span<double> dparams) const override;

 private:
  std::size_t h_, w_, c_;
};

class Relu final : public Layer {
 public:
  explicit Relu(std::size_t n) : n_(n) {}
  std::string kind() const override { return "relu"; }
  std::size_t input_size() const override { return n_; }
  std::size_t output_size() const override { return n_; }
  void forward(std::span<const double> params, std::span<const double> in,
               std::span<double> out) const override;
  void backward(std::span<const double> params, std::span<const double> in,
                std::span<const double> out, std::span<const double> dout, std::span<double> din,
                std::span<double> dparams) const override;

 private:
  std::size_t n_;
};

class Tanh final : public Layer {
 public:
  explicit Tanh(std::size_t n) : n_(n) {}
  std::string kind() const override { return "tanh"; }
  std::size_t input_size() const override { return n_; }
  std::size_t output_size() const override { return n_; }
  void forward(std::span<const double> params, std::span<const double> in,
               std::span<double> out) const override;
  void backward(std::span<const double> params, std::span<const double> in,
                std::span<const double> out, std::span<const double> dout, std::span<double> din,
                std::span<double> dparams) const override;

 private:
  std::size_t n_;
};

/// The same affine map applied to each of `tokens` rows (tokens = 1 is a
/// plain dense layer). Weights are [out][in], followed by the bias.
class Dense final : public Layer {
 public:
  Dense(std::size_t in, std::size_t out, std::size_t tokens = 1);
  std::string kind() const override { return "dense"; }
  std::size_t input_size() const override { return tokens_ * in_; }
  std::size_t output_size() const override { return tokens_ * out_; }
  std::size_t param_count() const override { return out_ * in_ + out_; }
  void init_params(std::span<double> params, std::mt19937_64& rng) const override;
  void forward(std::span<const double> params, std::span<const double> in,
               std::span<double> out) const override;
  void backward(std::span<const double> params, std::span<const double> in,
                std::span<const double> out, std::span<const double> dout, std::span<double> din,
                std::span<double> dparams) const override;

 private:
  std::size_t in_, out_, tokens_;
};

/// Splits an HWC image into non-overlapping p x p patches, one row per patch.
class Patchify final : public Layer {
 public:
  Patchify(std::size_t height, std::size_t width, std::size_t channels, std::size_t patch);
  std::string kind() const override { return "patchify"; }
  std::size_t input_size() const override { return h_ * w_ * c_; }
  std::size_t output_size() const override { return h_ * w_ * c_; }
  std::size_t tokens() const { return (h_ / p_) * (w_ / p_); }
  std::size_t token_dim() const { return p_ * p_ * c_; }
  void forward(std::span<const double> params, std::span<const double> in,
               std::span<double> out) const override;
  void backward(std::span<const double> params, std::span<const double> in,
                std::span<const double> out, std::span<const double> dout, std::span<double> din,
                std::span<double> dparams) const override;

 private:
  std::size_t source_index(std::size_t flat_out) const;
  std::size_t h_, w_, c_, p_;
};

/// Adds a learned per-token vector.
class PositionalAdd final : public Layer {
 public:
  explicit PositionalAdd(std::size_t n) : n_(n) {}
  std::string kind() const override { return "positional"; }
  std::size_t input_size() const override { return n_; }
  std::size_t output_size() const override { return n_; }
  std::size_t param_count() const override { return n_; }
  void init_params(std::span<double> params, std::mt19937_64& rng) const override;
  void forward(std::span<const double> params, std::span<const double> in,
               std::span<double> out) const override;
  void backward(std::span<const double> params, std::span<const double> in,
                std::span<const double> out, std::span<const double> dout, std::span<double> din,
                std::span<double> dparams) const override;

 private:
  std::size_t n_;
};

/// Single-head self-attention with a residual connection: H + softmax(Q K^T / sqrt(d)) V.
class SelfAttention final : public Layer {
 public:
  SelfAttention(std::size_t tokens, std::size_t dim);
  std::string kind() const override { return "attention"; }
  std::size_t input_size() const override { return n_ * d_; }
  std::size_t output_size() const override { return n_ * d_; }
  std::size_t param_count() const override { return 3 * (d_ * d_ + d_); }
  void init_params(std::span<double> params, std::mt19937_64& rng) const override;
  void forward(std::span<const double> params, std::span<const double> in,
               std::span<double> out) const override;
  void backward(std::span<const double> params, std::span<const double> in,
                std::span<const double> out, std::span<const double> dout, std::span<double> din,
                std::span<double> dparams) const override;

 private:
  std::size_t n_, d_;
};

/// Mean over token rows.
class MeanTokens final : public Layer {
 public:
  MeanTokens(std::size_t tokens, std::size_t dim) : n_(tokens), d_(dim) {}
  std::string kind() const override { return "mean_tokens"; }
  std::size_t input_size() const override { return n_ * d_; }
  std::size_t output_size() const override { return d_; }
  void forward(std::span<const double> params, std::span<const double> in,
               std::span<double> out) const override;
  void backward(std::span<const double> params, std::span<const double> in,
                std::span<const double> out, std::span<const double> dout, std::span<double> din,
                std::span<double> dparams) const override;

 private:
  std::size_t n_, d_;
};

/// A chain of layers sharing one flat parameter buffer.
class Sequential {
 public:
  Sequential() = default;

  /// Throws InterfaceError when sizes do not chain.
  void add(std::unique_ptr<Layer> layer);

  std::size_t input_size() const;
  std::size_t output_size() const;
  std::size_t param_count() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }

  void init_params(std::uint64_t seed);

  std::vector<double> forward(std::span<const double> x) const;

  /// True when every ReLU sees the same on/off pattern at both inputs, i.e.
  /// the network is smooth on the segment between them.
  bool same_activation_pattern(std::span<const double> a, std::span<const double> b) const;

  /// Forward then backward for one sample. Returns d<dout, f(x)>/dx and
  /// accumulates parameter gradients into `dparams` if non-empty.
  /// `dout_fn` maps the network output to d loss / d output.
  template <class F>
  std::vector<double> backward(std::span<const double> x, F&& dout_fn,
                               std::span<double> dparams) const {
    auto acts = activations(x);
    std::vector<double> dout = dout_fn(std::span<const double>(acts.back()));
    return backward_from(acts, std::move(dout), dparams);
  }

 private:
  std::vector<std::vector<double>> activations(std::span<const double> x) const;
  std::vector<double> backward_from(const std::vector<std::vector<double>>& acts,
                                    std::vector<double> dout, std::span<double> dparams) const;

  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

}  // namespace latadv
