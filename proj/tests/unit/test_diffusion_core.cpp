#include <cmath>
#include <random>

#include "doctest.h"
#include "latadv/diffusion.hpp"
#include "latadv/error.hpp"
#include "test_models.hpp"

using namespace latadv;
using latadv::testing::AffinePredictor;

namespace {

ConditionEmbedding embedding(std::size_t dim, double value,
                             EmbeddingKind kind = EmbeddingKind::text) {
  return {Tensor(Shape{dim}, value), kind};
}

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(shape);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

// Scaled-linear cumulative alphas, computed independently of the library.
std::vector<double> reference_alpha_bars(int total, double b0, double b1) {
  std::vector<double> out;
  double prod = 1.0;
  for (int i = 0; i < total; ++i) {
    const double s = std::sqrt(b0) + (std::sqrt(b1) - std::sqrt(b0)) * i / (total - 1);
    prod *= 1.0 - s * s;
    out.push_back(prod);
  }
  return out;
}

}  // namespace

TEST_CASE("default schedule matches an independent scaled-linear computation") {
  const auto s = compute_schedule(ScheduleParams{});
  const auto ref = reference_alpha_bars(1000, 0.00085, 0.012);
  REQUIRE(s.alpha_bars().size() == 1000);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(s.alpha_bars()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  for (std::size_t i = 1; i < ref.size(); ++i) CHECK(s.alpha_bars()[i] < s.alpha_bars()[i - 1]);
  const double rho = s.terminal_inverse_sqrt_alpha();
  CHECK(rho >= 14.0);
  CHECK(rho <= 15.2);
  CHECK(rho == doctest::Approx(1.0 / std::sqrt(ref.back())).epsilon(1e-12));
}

TEST_CASE("constant betas give the closed-form cumulative product") {
  const auto s = compute_schedule(100, 0.02, 0.02, 10);
  for (int t = 0; t < 100; ++t) {
    CHECK(s.alpha_bars()[static_cast<std::size_t>(t)] ==
          doctest::Approx(std::pow(0.98, t + 1)).epsilon(1e-12));
  }
}

TEST_CASE("inference steps are strictly increasing and span the training range") {
  for (int T : {1, 3, 10, 50, 1000}) {
    const auto s = compute_schedule(1000, 0.00085, 0.012, T);
    REQUIRE(s.num_steps() == T);
    const auto steps = s.inference_steps();
    for (std::size_t i = 1; i < steps.size(); ++i) CHECK(steps[i] > steps[i - 1]);
    CHECK(steps.back() == 999);
    CHECK(s.level_alpha(0) == 1.0);
  }
  const auto s = compute_schedule(ScheduleParams{});
  for (int k = 1; k <= 50; ++k) CHECK(s.level_alpha(k) < s.level_alpha(k - 1));
}

TEST_CASE("schedule parameter validation") {
  CHECK_THROWS_AS(compute_schedule(1000, 0.0, 0.012, 50), ParameterError);
  CHECK_THROWS_AS(compute_schedule(1000, 0.02, 0.01, 50), ParameterError);
  CHECK_THROWS_AS(compute_schedule(1000, 0.00085, 0.012, 0), ParameterError);
  CHECK_THROWS_AS(compute_schedule(1000, 0.00085, 0.012, 1001), ParameterError);
  const auto s = compute_schedule(ScheduleParams{});
  CHECK_THROWS_AS(s.level_alpha(51), ParameterError);
  CHECK(s.with_steps(0).num_steps() == 0);
}

TEST_CASE("guidance reductions and the default scale") {
  const Shape shape{2, 2, 3};
  // Conditional and null embeddings shift the output differently.
  AffinePredictor model(shape, 4, 0.3, 0.1, 0.25);
  std::mt19937_64 rng(3);
  const Tensor z = random_tensor(shape, rng);
  const auto cond = embedding(4, 1.0), null = embedding(4, -0.5, EmbeddingKind::null);
  const Tensor ec = model.predict(z, 10, cond), eu = model.predict(z, 10, null);

  CHECK(cfg_predict(model, z, 10, cond, null, 1.0) == ec);
  CHECK(cfg_predict(model, z, 10, cond, embedding(4, 9.0, EmbeddingKind::null), 1.0) == ec);
  CHECK(cfg_predict(model, z, 10, cond, null, 0.0) == eu);
  const Tensor g = cfg_predict(model, z, 10, cond, null, 7.5);
  for (std::size_t i = 0; i < g.numel(); ++i) {
    CHECK(g[i] == doctest::Approx(7.5 * ec[i] - 6.5 * eu[i]).epsilon(1e-14));
  }
}

TEST_CASE("guidance rejects mismatched shapes") {
  AffinePredictor model(Shape{2, 2, 3}, 4, 1.0, 0.0);
  const Tensor bad(Shape{2, 2, 2});
  CHECK_THROWS_AS(cfg_predict(model, bad, 0, embedding(4, 0), embedding(4, 0), 2.0),
                  InterfaceError);
  CHECK_THROWS_AS(cfg_predict(model, Tensor(Shape{2, 2, 3}), 0, embedding(3, 0), embedding(4, 0), 2.0),
                  InterfaceError);
}

TEST_CASE("DDIM transition scalar example") {
  const Tensor z(Shape{1}, 1.0), eps(Shape{1}, 1.0);
  // Predict x0 from (z, eps) at alpha 0.25 and re-noise at alpha 0.16.
  const double x0 = (1.0 - std::sqrt(0.75) * 1.0) / std::sqrt(0.25);
  const double expected = std::sqrt(0.16) * x0 + std::sqrt(0.84) * 1.0;
  const Tensor out = ddim_transition(z, eps, 0.25, 0.16);
  CHECK(out[0] == doctest::Approx(expected).epsilon(1e-14));
  CHECK(out[0] == doctest::Approx(0.8 + 0.4 * (std::sqrt(5.25) - std::sqrt(3.0))).epsilon(1e-14));
  CHECK(out[0] == doctest::Approx(1.023695).epsilon(1e-6));
}

TEST_CASE("DDIM transition degenerate cases") {
  std::mt19937_64 rng(5);
  const Shape shape{4, 4, 3};
  const Tensor z = random_tensor(shape, rng), eps = random_tensor(shape, rng);
  const Tensor zero(shape);
  const Tensor rescaled = ddim_transition(z, zero, 0.3, 0.7);
  for (std::size_t i = 0; i < z.numel(); ++i) CHECK(rescaled[i] == doctest::Approx(std::sqrt(0.7 / 0.3) * z[i]));
  CHECK(ddim_transition(z, eps, 0.42, 0.42) == z);
  CHECK_THROWS_AS(ddim_transition(z, eps, 0.0, 0.5), ParameterError);
  // Same eps used both ways undoes the step.
  const Tensor back = ddim_transition(ddim_transition(z, eps, 0.9, 0.2), eps, 0.2, 0.9);
  for (std::size_t i = 0; i < z.numel(); ++i) CHECK(back[i] == doctest::Approx(z[i]).epsilon(1e-12));
}

TEST_CASE("invert then denoise at w=1 is exact for a constant predictor") {
  const auto s = compute_schedule(ScheduleParams{});
  const Shape shape{4, 4, 3};
  AffinePredictor constant(shape, 2, 0.0, 0.37);
  std::mt19937_64 rng(7);
  const Tensor z = random_tensor(shape, rng);
  for (int level : {0, 1, 25, 49}) {
    const auto up = ddim_invert_step(s, constant, {z, level}, embedding(2, 0.0));
    CHECK(up.level == level + 1);
    const auto down = ddim_denoise_step(s, constant, up, embedding(2, 0.0),
                                        embedding(2, 5.0, EmbeddingKind::null), 1.0);
    CHECK(down.level == level);
    for (std::size_t i = 0; i < z.numel(); ++i) CHECK(down.values[i] == doctest::Approx(z[i]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(ddim_invert_step(s, constant, {z, 50}, embedding(2, 0.0)), ParameterError);
  CHECK_THROWS_AS(ddim_denoise_step(s, constant, {z, 0}, embedding(2, 0.0), embedding(2, 0.0), 1.0),
                  ParameterError);
}

TEST_CASE("invert then denoise error shrinks with the step gap for a linear predictor") {
  const Shape shape{8};
  AffinePredictor linear(shape, 1, 0.5, 0.0);
  std::mt19937_64 rng(9);
  const Tensor z = random_tensor(shape, rng);
  double previous = INFINITY;
  for (int T : {5, 50, 500}) {
    const auto s = compute_schedule(1000, 0.00085, 0.012, T);
    const auto up = ddim_invert_step(s, linear, {z, 1}, embedding(1, 0.0));
    const auto down = ddim_denoise_step(s, linear, up, embedding(1, 0.0), embedding(1, 0.0), 1.0);
    const double err = (down.values.vec() - z.vec()).norm();
    CHECK(err < previous);
    previous = err;
  }
}

TEST_CASE("zero predictor denoising is a pure rescaling") {
  const auto s = compute_schedule(ScheduleParams{});
  const Shape shape{3, 3, 3};
  AffinePredictor zero(shape, 2, 0.0, 0.0);
  std::mt19937_64 rng(11);
  const Tensor z = random_tensor(shape, rng);
  const auto down = ddim_denoise_step(s, zero, {z, 20}, embedding(2, 1.0), embedding(2, 0.0), 7.5);
  const double scale = std::sqrt(s.level_alpha(19) / s.level_alpha(20));
  for (std::size_t i = 0; i < z.numel(); ++i) CHECK(down.values[i] == doctest::Approx(scale * z[i]));

  std::vector<ConditionEmbedding> nulls(50, embedding(2, 0.0, EmbeddingKind::null));
  const Tensor full = denoise_full(s, zero, {z, 50}, embedding(2, 1.0), nulls, 7.5);
  const double total = std::sqrt(1.0 / s.level_alpha(50));
  for (std::size_t i = 0; i < z.numel(); ++i) CHECK(full[i] == doctest::Approx(total * z[i]).epsilon(1e-12));
}

TEST_CASE("denoise_full with one step equals a single denoise step") {
  const auto s = compute_schedule(1000, 0.00085, 0.012, 1);
  const Shape shape{2, 2, 3};
  AffinePredictor model(shape, 2, 0.2, 0.05, 0.3);
  std::mt19937_64 rng(13);
  const Tensor z = random_tensor(shape, rng);
  const std::vector<ConditionEmbedding> nulls{embedding(2, -0.2, EmbeddingKind::null)};
  const Tensor full = denoise_full(s, model, {z, 1}, embedding(2, 0.4), nulls, 3.0);
  const auto step = ddim_denoise_step(s, model, {z, 1}, embedding(2, 0.4), nulls[0], 3.0);
  CHECK(full == step.values);
  CHECK_THROWS_AS(denoise_full(s, model, {z, 1}, embedding(2, 0.4), {}, 3.0), ParameterError);
}

TEST_CASE("forward diffusion") {
  const Tensor z0(Shape{1}, 1.0), eps(Shape{1}, 2.0);
  CHECK(forward_diffuse(z0, 0.25, eps)[0] == doctest::Approx(2.23205).epsilon(1e-5));
  CHECK(forward_diffuse(z0, 0.25, eps)[0] == doctest::Approx(0.5 + std::sqrt(0.75) * 2.0));
  CHECK(forward_diffuse(z0, 1.0, eps)[0] == 1.0);
  CHECK(forward_diffuse(z0, 0.36, Tensor(Shape{1}))[0] == doctest::Approx(0.6));
  CHECK_THROWS_AS(forward_diffuse(z0, 0.5, Tensor(Shape{2})), InterfaceError);
  const auto s = compute_schedule(ScheduleParams{});
  CHECK_THROWS_AS(forward_diffuse(s, z0, 1000, eps), ParameterError);
}

TEST_CASE("steppers preserve shape and finiteness") {
  const auto s = compute_schedule(ScheduleParams{});
  const Shape shape{5, 4, 3};
  AffinePredictor model(shape, 3, -0.4, 0.2, 0.1);
  std::mt19937_64 rng(17);
  LatentState z{random_tensor(shape, rng), 0};
  for (int k = 0; k < 50; ++k) {
    z = ddim_invert_step(s, model, z, embedding(3, 0.5));
    CHECK(z.values.shape() == shape);
    CHECK(z.values.all_finite());
  }
  for (int k = 50; k > 0; --k) {
    z = ddim_denoise_step(s, model, z, embedding(3, 0.5), embedding(3, 0.0), 7.5);
    CHECK(z.values.shape() == shape);
    CHECK(z.values.all_finite());
  }
}
