#include "latadv/models/layers.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "latadv/error.hpp"

namespace latadv {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMat = Eigen::Map<const RowMatrix>;
using Mat = Eigen::Map<RowMatrix>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;
using Vec = Eigen::Map<Eigen::VectorXd>;

ConstMat cmat(std::span<const double> s, std::size_t offset, std::size_t rows, std::size_t cols) {
  return {s.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}
Mat mat(std::span<double> s, std::size_t offset, std::size_t rows, std::size_t cols) {
  return {s.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}
ConstVec cvec(std::span<const double> s, std::size_t offset, std::size_t n) {
  return {s.data() + offset, static_cast<Eigen::Index>(n)};
}
Vec vec(std::span<double> s, std::size_t offset, std::size_t n) {
  return {s.data() + offset, static_cast<Eigen::Index>(n)};
}

void fill_uniform(std::span<double> out, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : out) v = dist(rng);
}

RowMatrix row_softmax(const RowMatrix& s) {
  RowMatrix a = s;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    a.row(i).array() -= a.row(i).maxCoeff();
    a.row(i) = a.row(i).array().exp().matrix();
    a.row(i) /= a.row(i).sum();
  }
  return a;
}

}  // namespace

void Layer::init_params(std::span<double> params, std::mt19937_64&) const {
  std::fill(params.begin(), params.end(), 0.0);
}

// ---- Conv2d ---------------------------------------------------------------

Conv2d::Conv2d(std::size_t height, std::size_t width, std::size_t in_channels,
               std::size_t out_channels)
    : h_(height), w_(width), cin_(in_channels), cout_(out_channels) {
  if (h_ == 0 || w_ == 0 || cin_ == 0 || cout_ == 0) throw ParameterError("empty conv layer");
}

void Conv2d::init_params(std::span<double> params, std::mt19937_64& rng) const {
  const std::size_t nw = cout_ * 9 * cin_;
  fill_uniform(params.first(nw), std::sqrt(6.0 / static_cast<double>(9 * cin_)), rng);
  std::fill(params.begin() + static_cast<std::ptrdiff_t>(nw), params.end(), 0.0);
}

void Conv2d::forward(std::span<const double> params, std::span<const double> in,
                     std::span<double> out) const {
  const double* bias = params.data() + cout_ * 9 * cin_;
  for (std::size_t y = 0; y < h_; ++y) {
    for (std::size_t x = 0; x < w_; ++x) {
      double* o = out.data() + (y * w_ + x) * cout_;
      for (std::size_t co = 0; co < cout_; ++co) o[co] = bias[co];
      for (int ky = 0; ky < 3; ++ky) {
        const auto sy = static_cast<std::ptrdiff_t>(y) + ky - 1;
        if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h_)) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const auto sx = static_cast<std::ptrdiff_t>(x) + kx - 1;
          if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w_)) continue;
          const double* src = in.data() + (static_cast<std::size_t>(sy) * w_ +
                                           static_cast<std::size_t>(sx)) * cin_;
          for (std::size_t co = 0; co < cout_; ++co) {
            const double* k = params.data() + ((co * 3 + ky) * 3 + kx) * cin_;
            double acc = 0.0;
            for (std::size_t ci = 0; ci < cin_; ++ci) acc += k[ci] * src[ci];
            o[co] += acc;
          }
        }
      }
    }
  }
}

void Conv2d::backward(std::span<const double> params, std::span<const double> in,
                      std::span<const double>, std::span<const double> dout,
                      std::span<double> din, std::span<double> dparams) const {
  std::fill(din.begin(), din.end(), 0.0);
  const bool want_params = !dparams.empty();
  double* dbias = want_params ? dparams.data() + cout_ * 9 * cin_ : nullptr;
  for (std::size_t y = 0; y < h_; ++y) {
    for (std::size_t x = 0; x < w_; ++x) {
      const double* g = dout.data() + (y * w_ + x) * cout_;
      if (want_params) {
        for (std::size_t co = 0; co < cout_; ++co) dbias[co] += g[co];
      }
      for (int ky = 0; ky < 3; ++ky) {
        const auto sy = static_cast<std::ptrdiff_t>(y) + ky - 1;
        if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h_)) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const auto sx = static_cast<std::ptrdiff_t>(x) + kx - 1;
          if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w_)) continue;
          const std::size_t src_off =
              (static_cast<std::size_t>(sy) * w_ + static_cast<std::size_t>(sx)) * cin_;
          const double* src = in.data() + src_off;
          double* dsrc = din.data() + src_off;
          for (std::size_t co = 0; co < cout_; ++co) {
            const std::size_t koff = ((co * 3 + ky) * 3 + kx) * cin_;
            const double* k = params.data() + koff;
            for (std::size_t ci = 0; ci < cin_; ++ci) dsrc[ci] += g[co] * k[ci];
            if (want_params) {
              double* dk = dparams.data() + koff;
              for (std::size_t ci = 0; ci < cin_; ++ci) dk[ci] += g[co] * src[ci];
            }
          }
        }
      }
    }
  }
}

// ---- AvgPool2 -------------------------------------------------------------

AvgPool2::AvgPool2(std::size_t height, std::size_t width, std::size_t channels)
    : h_(height), w_(width), c_(channels) {
  if (h_ % 2 != 0 || w_ % 2 != 0) throw ParameterError("avgpool2 needs even sides");
}

void AvgPool2::forward(std::span<const double>, std::span<const double> in,
                       std::span<double> out) const {
  const std::size_t ow = w_ / 2;
  for (std::size_t y = 0; y < h_ / 2; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      for (std::size_t c = 0; c < c_; ++c) {
        const auto at = [&](std::size_t dy, std::size_t dx) {
          return in[((2 * y + dy) * w_ + 2 * x + dx) * c_ + c];
        };
        out[(y * ow + x) * c_ + c] = 0.25 * (at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1));
      }
    }
  }
}

void AvgPool2::backward(std::span<const double>, std::span<const double>,
                        std::span<const double>, std::span<const double> dout,
                        std::span<double> din, std::span<double>) const {
  const std::size_t ow = w_ / 2;
  for (std::size_t y = 0; y < h_; ++y) {
    for (std::size_t x = 0; x < w_; ++x) {
      for (std::size_t c = 0; c < c_; ++c) {
        din[(y * w_ + x) * c_ + c] = 0.25 * dout[((y / 2) * ow + x / 2) * c_ + c];
      }
    }
  }
}

// ---- pointwise ------------------------------------------------------------

void Relu::forward(std::span<const double>, std::span<const double> in,
                   std::span<double> out) const {
  for (std::size_t i = 0; i < n_; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
}

void Relu::backward(std::span<const double>, std::span<const double> in, std::span<const double>,
                    std::span<const double> dout, std::span<double> din,
                    std::span<double>) const {
  for (std::size_t i = 0; i < n_; ++i) din[i] = in[i] > 0.0 ? dout[i] : 0.0;
}

void Tanh::forward(std::span<const double>, std::span<const double> in,
                   std::span<double> out) const {
  for (std::size_t i = 0; i < n_; ++i) out[i] = std::tanh(in[i]);
}

void Tanh::backward(std::span<const double>, std::span<const double>,
                    std::span<const double> out, std::span<const double> dout,
                    std::span<double> din, std::span<double>) const {
  for (std::size_t i = 0; i < n_; ++i) din[i] = dout[i] * (1.0 - out[i] * out[i]);
}

// ---- Dense ----------------------------------------------------------------

Dense::Dense(std::size_t in, std::size_t out, std::size_t tokens)
    : in_(in), out_(out), tokens_(tokens) {
  if (in_ == 0 || out_ == 0 || tokens_ == 0) throw ParameterError("empty dense layer");
}

void Dense::init_params(std::span<double> params, std::mt19937_64& rng) const {
  fill_uniform(params.first(in_ * out_), std::sqrt(6.0 / static_cast<double>(in_ + out_)), rng);
  std::fill(params.begin() + static_cast<std::ptrdiff_t>(in_ * out_), params.end(), 0.0);
}

void Dense::forward(std::span<const double> params, std::span<const double> in,
                    std::span<double> out) const {
  const auto W = cmat(params, 0, out_, in_);
  const auto b = cvec(params, out_ * in_, out_);
  const auto X = cmat(in, 0, tokens_, in_);
  auto Y = mat(out, 0, tokens_, out_);
  Y.noalias() = X * W.transpose();
  Y.rowwise() += b.transpose();
}

void Dense::backward(std::span<const double> params, std::span<const double> in,
                     std::span<const double>, std::span<const double> dout,
                     std::span<double> din, std::span<double> dparams) const {
  const auto W = cmat(params, 0, out_, in_);
  const auto X = cmat(in, 0, tokens_, in_);
  const auto G = cmat(dout, 0, tokens_, out_);
  mat(din, 0, tokens_, in_).noalias() = G * W;
  if (!dparams.empty()) {
    mat(dparams, 0, out_, in_).noalias() += G.transpose() * X;
    vec(dparams, out_ * in_, out_) += G.colwise().sum().transpose();
  }
}

// ---- Patchify -------------------------------------------------------------

Patchify::Patchify(std::size_t height, std::size_t width, std::size_t channels, std::size_t patch)
    : h_(height), w_(width), c_(channels), p_(patch) {
  if (p_ == 0 || h_ % p_ != 0 || w_ % p_ != 0) {
    throw ParameterError("patch size must divide the image sides");
  }
}

std::size_t Patchify::source_index(std::size_t flat_out) const {
  const std::size_t dim = token_dim();
  const std::size_t token = flat_out / dim;
  std::size_t r = flat_out % dim;
  const std::size_t py = r / (p_ * c_);
  r %= p_ * c_;
  const std::size_t px = r / c_;
  const std::size_t c = r % c_;
  const std::size_t per_row = w_ / p_;
  const std::size_t y = (token / per_row) * p_ + py;
  const std::size_t x = (token % per_row) * p_ + px;
  return (y * w_ + x) * c_ + c;
}

void Patchify::forward(std::span<const double>, std::span<const double> in,
                       std::span<double> out) const {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[source_index(i)];
}

void Patchify::backward(std::span<const double>, std::span<const double>,
                        std::span<const double>, std::span<const double> dout,
                        std::span<double> din, std::span<double>) const {
  for (std::size_t i = 0; i < dout.size(); ++i) din[source_index(i)] = dout[i];
}

// ---- PositionalAdd --------------------------------------------------------

void PositionalAdd::init_params(std::span<double> params, std::mt19937_64& rng) const {
  fill_uniform(params, 0.1, rng);
}

void PositionalAdd::forward(std::span<const double> params, std::span<const double> in,
                            std::span<double> out) const {
  for (std::size_t i = 0; i < n_; ++i) out[i] = in[i] + params[i];
}

void PositionalAdd::backward(std::span<const double>, std::span<const double>,
                             std::span<const double>, std::span<const double> dout,
                             std::span<double> din, std::span<double> dparams) const {
  for (std::size_t i = 0; i < n_; ++i) {
    din[i] = dout[i];
    if (!dparams.empty()) dparams[i] += dout[i];
  }
}

// ---- SelfAttention --------------------------------------------------------
// Parameter layout: Wq, bq, Wk, bk, Wv, bv with W stored [out][in].

SelfAttention::SelfAttention(std::size_t tokens, std::size_t dim) : n_(tokens), d_(dim) {
  if (n_ == 0 || d_ == 0) throw ParameterError("empty attention layer");
}

void SelfAttention::init_params(std::span<double> params, std::mt19937_64& rng) const {
  const std::size_t block = d_ * d_ + d_;
  for (std::size_t k = 0; k < 3; ++k) {
    auto p = params.subspan(k * block, block);
    fill_uniform(p.first(d_ * d_), std::sqrt(3.0 / static_cast<double>(d_)), rng);
    std::fill(p.begin() + static_cast<std::ptrdiff_t>(d_ * d_), p.end(), 0.0);
  }
}

void SelfAttention::forward(std::span<const double> params, std::span<const double> in,
                            std::span<double> out) const {
  const std::size_t block = d_ * d_ + d_;
  const auto H = cmat(in, 0, n_, d_);
  auto project = [&](std::size_t k) -> RowMatrix {
    RowMatrix r = H * cmat(params, k * block, d_, d_).transpose();
    r.rowwise() += cvec(params, k * block + d_ * d_, d_).transpose();
    return r;
  };
  const RowMatrix Q = project(0), K = project(1), V = project(2);
  const RowMatrix A = row_softmax(Q * K.transpose() / std::sqrt(static_cast<double>(d_)));
  mat(out, 0, n_, d_) = H + A * V;
}

void SelfAttention::backward(std::span<const double> params, std::span<const double> in,
                             std::span<const double>, std::span<const double> dout,
                             std::span<double> din, std::span<double> dparams) const {
  const std::size_t block = d_ * d_ + d_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_));
  const auto H = cmat(in, 0, n_, d_);
  auto project = [&](std::size_t k) -> RowMatrix {
    RowMatrix r = H * cmat(params, k * block, d_, d_).transpose();
    r.rowwise() += cvec(params, k * block + d_ * d_, d_).transpose();
    return r;
  };
  const RowMatrix Q = project(0), K = project(1), V = project(2);
  const RowMatrix A = row_softmax(Q * K.transpose() * scale);
  const auto G = cmat(dout, 0, n_, d_);

  const RowMatrix dA = G * V.transpose();
  const RowMatrix dV = A.transpose() * G;
  RowMatrix dS = A;
  for (Eigen::Index i = 0; i < dS.rows(); ++i) {
    const double dot = dA.row(i).dot(A.row(i));
    dS.row(i) = A.row(i).array() * (dA.row(i).array() - dot);
  }
  const RowMatrix dQ = dS * K * scale;
  const RowMatrix dK = dS.transpose() * Q * scale;

  auto dH = mat(din, 0, n_, d_);
  dH = G;
  const RowMatrix* grads[3] = {&dQ, &dK, &dV};
  for (std::size_t k = 0; k < 3; ++k) {
    dH.noalias() += *grads[k] * cmat(params, k * block, d_, d_);
    if (!dparams.empty()) {
      mat(dparams, k * block, d_, d_).noalias() += grads[k]->transpose() * H;
      vec(dparams, k * block + d_ * d_, d_) += grads[k]->colwise().sum().transpose();
    }
  }
}

// ---- MeanTokens -----------------------------------------------------------

void MeanTokens::forward(std::span<const double>, std::span<const double> in,
                         std::span<double> out) const {
  vec(out, 0, d_) = cmat(in, 0, n_, d_).colwise().mean().transpose();
}

void MeanTokens::backward(std::span<const double>, std::span<const double>,
                          std::span<const double>, std::span<const double> dout,
                          std::span<double> din, std::span<double>) const {
  const double inv = 1.0 / static_cast<double>(n_);
  for (std::size_t t = 0; t < n_; ++t) {
    for (std::size_t j = 0; j < d_; ++j) din[t * d_ + j] = dout[j] * inv;
  }
}

// ---- Sequential -----------------------------------------------------------

void Sequential::add(std::unique_ptr<Layer> layer) {
  if (!layers_.empty() && layers_.back()->output_size() != layer->input_size()) {
    throw InterfaceError("layer '" + layer->kind() + "' expects " +
                         std::to_string(layer->input_size()) + " inputs, previous layer emits " +
                         std::to_string(layers_.back()->output_size()));
  }
  offsets_.push_back(params_.size());
  params_.resize(params_.size() + layer->param_count(), 0.0);
  layers_.push_back(std::move(layer));
}

std::size_t Sequential::input_size() const {
  return layers_.empty() ? 0 : layers_.front()->input_size();
}

std::size_t Sequential::output_size() const {
  return layers_.empty() ? 0 : layers_.back()->output_size();
}

void Sequential::init_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->init_params(std::span(params_).subspan(offsets_[i], layers_[i]->param_count()),
                            rng);
  }
}

std::vector<std::vector<double>> Sequential::activations(std::span<const double> x) const {
  if (x.size() != input_size()) {
    throw InterfaceError("network expects " + std::to_string(input_size()) + " inputs, got " +
                         std::to_string(x.size()));
  }
  std::vector<std::vector<double>> acts;
  acts.reserve(layers_.size() + 1);
  acts.emplace_back(x.begin(), x.end());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    std::vector<double> out(layers_[i]->output_size());
    layers_[i]->forward(std::span(params_).subspan(offsets_[i], layers_[i]->param_count()),
                        acts.back(), out);
    acts.push_back(std::move(out));
  }
  return acts;
}

std::vector<double> Sequential::forward(std::span<const double> x) const {
  return std::move(activations(x).back());
}

bool Sequential::same_activation_pattern(std::span<const double> a,
                                         std::span<const double> b) const {
  const auto acts_a = activations(a);
  const auto acts_b = activations(b);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (!dynamic_cast<const Relu*>(layers_[i].get())) continue;
    for (std::size_t j = 0; j < acts_a[i].size(); ++j) {
      if ((acts_a[i][j] > 0.0) != (acts_b[i][j] > 0.0)) return false;
    }
  }
  return true;
}

std::vector<double> Sequential::backward_from(const std::vector<std::vector<double>>& acts,
                                              std::vector<double> dout,
                                              std::span<double> dparams) const {
  if (dout.size() != output_size()) throw InterfaceError("output gradient has wrong length");
  if (!dparams.empty() && dparams.size() != params_.size()) {
    throw InterfaceError("parameter gradient buffer has wrong length");
  }
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const std::size_t count = layers_[i]->param_count();
    std::vector<double> din(layers_[i]->input_size());
    layers_[i]->backward(std::span(params_).subspan(offsets_[i], count), acts[i], acts[i + 1],
                         dout, din,
                         dparams.empty() ? std::span<double>() : dparams.subspan(offsets_[i], count));
    dout = std::move(din);
  }
  return dout;
}

}  // namespace latadv
