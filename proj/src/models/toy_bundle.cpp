#include "latadv/models/toy_bundle.hpp"

#include <fstream>
#include <random>

#include "json.hpp"
#include "latadv/diffusion.hpp"
#include "latadv/error.hpp"
#include "latadv/latent_io.hpp"
#include "latadv/models/gradient_check.hpp"

namespace latadv {

void to_json(nlohmann::json& j, const TrainOptions& t) {
  j = {{"epochs", t.epochs}, {"batch", t.batch}, {"learning_rate", t.learning_rate}, {"seed", t.seed}};
}
void from_json(const nlohmann::json& j, TrainOptions& t) {
  j.at("epochs").get_to(t.epochs);
  j.at("batch").get_to(t.batch);
  j.at("learning_rate").get_to(t.learning_rate);
  j.at("seed").get_to(t.seed);
}

namespace {

nlohmann::json config_json(const ToyBundleConfig& c) {
  return {{"schedule", c.schedule},
          {"prior",
           {{"embedding_dim", c.prior.embedding_dim},
            {"shrinkage", c.prior.shrinkage},
            {"guidance", c.prior.guidance},
            {"null_step", c.prior.null_step}}},
          {"surrogate_arch", c.surrogate_arch},
          {"target_arch", c.target_arch},
          {"surrogate_train", c.surrogate_train},
          {"target_train", c.target_train},
          {"seed", c.seed}};
}

ToyBundleConfig config_from_json(const nlohmann::json& j) {
  ToyBundleConfig c;
  j.at("schedule").get_to(c.schedule);
  const auto& p = j.at("prior");
  p.at("embedding_dim").get_to(c.prior.embedding_dim);
  p.at("shrinkage").get_to(c.prior.shrinkage);
  p.at("guidance").get_to(c.prior.guidance);
  p.at("null_step").get_to(c.prior.null_step);
  j.at("surrogate_arch").get_to(c.surrogate_arch);
  j.at("target_arch").get_to(c.target_arch);
  j.at("surrogate_train").get_to(c.surrogate_train);
  j.at("target_train").get_to(c.target_train);
  j.at("seed").get_to(c.seed);
  return c;
}

std::vector<double> flatten(const Eigen::MatrixXd& m) {
  // Row-major on disk.
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

Eigen::MatrixXd unflatten(const std::vector<double>& v, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

std::string classifier_file(const std::string& name) { return "classifier_" + name + ".f32"; }

}  // namespace

BackendDescriptor ToyBundle::descriptor() const {
  BackendDescriptor d;
  d.schedule = config.schedule;
  d.predictor = predictor;
  d.prompts = prompts;
  d.codec = std::make_shared<IdentityCodec>();
  d.image_shape = image_shape;
  return d;
}

void ToyBundle::register_into(Registry& registry, const std::string& backend_name) const {
  registry.adapter_register(backend_name, descriptor());
  for (const auto& c : classifiers) registry.register_classifier(c.name, c.model);
}

double noise_prediction_mse(const NoisePredictor& model, const PromptTable& prompts,
                            const DiffusionSchedule& schedule, const LabeledImages& data,
                            std::uint64_t seed) {
  if (data.size() == 0) throw ParameterError("noise_prediction_mse needs images");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_t(0, schedule.total_train_steps() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int t = pick_t(rng);
    Tensor eps(data.images[i].shape());
    for (double& v : eps.values()) v = normal(rng);
    const Tensor z = forward_diffuse(schedule, data.images[i], t, eps);
    total += mean_squared_error(model.predict(z, t, prompts.lookup(data.captions[i])), eps);
  }
  return total / static_cast<double>(data.size());
}

namespace {

void fit_prior_into(ToyBundle& b, const LabeledImages& train, const LabeledImages& heldout) {
  const auto schedule = compute_schedule(b.config.schedule);
  const int classes = static_cast<int>(b.class_names.size());
  auto fit = fit_gaussian_prior(train.images, train.labels, classes, schedule, b.config.prior);
  const std::vector<double> alphas(schedule.alpha_bars().begin(), schedule.alpha_bars().end());
  b.predictor = std::make_shared<GaussianNoisePredictor>(b.image_shape, alphas, std::move(fit.params));
  b.prompts = std::make_shared<PromptTable>(b.predictor->embedding_shape());
  for (int c = 0; c < classes; ++c) {
    b.prompts->add(toy_caption(b.class_names[static_cast<std::size_t>(c)]),
                   fit.class_embeddings[static_cast<std::size_t>(c)]);
  }
  b.report.embedding_gain = fit.embedding_gain;
  b.report.noise_mse_floor = noise_prediction_mse(*b.predictor, *b.prompts, schedule, train, b.config.seed + 101);
  b.report.noise_mse_heldout = noise_prediction_mse(*b.predictor, *b.prompts, schedule, heldout, b.config.seed + 202);
}

}  // namespace

ToyBundle refit_prior(const ToyBundle& base, const LabeledImages& train,
                      const LabeledImages& heldout, const ScheduleParams& schedule) {
  if (train.size() == 0 || heldout.size() == 0) {
    throw ParameterError("toy bundle needs non-empty training and held-out sets");
  }
  ToyBundle b = base;
  b.config.schedule = schedule;
  fit_prior_into(b, train, heldout);
  return b;
}

ToyBundle fit_toy_bundle(const LabeledImages& train, const LabeledImages& heldout,
                         const ToyBundleConfig& config) {
  if (train.size() == 0 || heldout.size() == 0) {
    throw ParameterError("toy bundle needs non-empty training and held-out sets");
  }
  const auto schedule = compute_schedule(config.schedule);
  const int classes = static_cast<int>(train.class_names.size());

  ToyBundle b;
  b.config = config;
  b.image_shape = train.image_shape;
  b.class_names = train.class_names;
  fit_prior_into(b, train, heldout);

  const std::pair<const char*, std::pair<NetworkArch, TrainOptions>> specs[] = {
      {"surrogate", {config.surrogate_arch, config.surrogate_train}},
      {"target", {config.target_arch, config.target_train}}};
  for (const auto& [role, spec] : specs) {
    auto model = std::make_shared<NetworkClassifier>(spec.first, b.image_shape,
                                                     static_cast<std::size_t>(classes),
                                                     spec.second.seed + config.seed);
    const auto stats = train_classifier(*model, train.images, train.labels, spec.second);
    b.report.train_accuracy.push_back(stats.train_accuracy);
    b.report.heldout_accuracy.push_back(accuracy(*model, heldout.images, heldout.labels));
    b.classifiers.push_back({spec.first.family, std::move(model)});
  }

  // Post-fit gradient checks on held-out inputs.
  auto& r = b.report;
  auto tally = [&r](const GradientCheck& g) {
    r.gradient_check_error = std::max(r.gradient_check_error, g.max_relative_error);
    r.gradient_check_probes += g.probes;
    r.gradient_check_inconclusive += g.inconclusive;
  };
  for (std::size_t i = 0; i < std::min<std::size_t>(4, heldout.size()); ++i) {
    for (const auto& c : b.classifiers) {
      tally(check_classifier_gradient(*c.model, heldout.images[i], heldout.labels[i], 4,
                                      config.seed + i));
    }
    const int t = schedule.inference_steps()[i % schedule.inference_steps().size()];
    tally(check_predictor_gradient(*b.predictor, heldout.images[i], t,
                                   b.prompts->lookup(heldout.captions[i]), 4, config.seed + i));
  }
  r.gradient_checks_passed = r.gradient_check_probes > 0 && r.gradient_check_error < 1e-3;
  return b;
}

void save_bundle(const std::filesystem::path& dir, const ToyBundle& b) {
  std::filesystem::create_directories(dir);
  const auto& p = b.predictor->params();
  write_f32(dir / "prior_mean.f32", std::vector<double>(p.mean.data(), p.mean.data() + p.mean.size()));
  write_f32(dir / "prior_basis.f32", flatten(p.basis));
  write_f32(dir / "prior_variances.f32",
            std::vector<double>(p.variances.data(), p.variances.data() + p.variances.size()));
  write_f32(dir / "prior_embed_proj.f32", flatten(p.embed_proj));

  std::vector<double> prompt_blob;
  nlohmann::json prompt_keys = nlohmann::json::array();
  for (const auto& [key, value] : b.prompts->entries()) {
    prompt_keys.push_back(key);
    prompt_blob.insert(prompt_blob.end(), value.values().begin(), value.values().end());
  }
  write_f32(dir / "prompts.f32", prompt_blob);

  nlohmann::json classifiers = nlohmann::json::array();
  for (const auto& c : b.classifiers) {
    write_f32(dir / classifier_file(c.name), c.model->network().params());
    classifiers.push_back({{"name", c.name},
                           {"arch", c.model->arch()},
                           {"num_classes", c.model->num_classes()},
                           {"param_count", c.model->network().param_count()}});
  }
  const auto& r = b.report;
  nlohmann::json meta = {
      {"format_version", kBundleFormatVersion},
      {"config", config_json(b.config)},
      {"image_shape", b.image_shape.dims()},
      {"class_names", b.class_names},
      {"predictor",
       {{"kind", "gaussian_posterior_mean"},
        {"embedding_dim", b.predictor->embedding_shape()[0]},
        {"capabilities", {{"differentiable", true}, {"concurrent_safe", true}}}}},
      {"prompt_keys", prompt_keys},
      {"classifiers", classifiers},
      {"fit_report",
       {{"noise_mse_floor", r.noise_mse_floor},
        {"noise_mse_heldout", r.noise_mse_heldout},
        {"embedding_gain", r.embedding_gain},
        {"train_accuracy", r.train_accuracy},
        {"heldout_accuracy", r.heldout_accuracy},
        {"gradient_check_error", r.gradient_check_error},
        {"gradient_check_probes", r.gradient_check_probes},
        {"gradient_check_inconclusive", r.gradient_check_inconclusive},
        {"gradient_checks_passed", r.gradient_checks_passed}}}};
  std::ofstream out(dir / "bundle.json");
  if (!(out << meta.dump(2) << '\n')) throw IoError("cannot write " + (dir / "bundle.json").string());
}

ToyBundle load_bundle(const std::filesystem::path& dir) {
  const auto meta_path = dir / "bundle.json";
  std::ifstream in(meta_path);
  if (!in) throw IoError("no toy bundle at " + dir.string() + " (missing bundle.json)");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
    if (meta.at("format_version").get<int>() != kBundleFormatVersion) {
      throw IoError(meta_path.string() + ": unsupported format_version");
    }
    ToyBundle b;
    b.config = config_from_json(meta.at("config"));
    b.image_shape = Shape(meta.at("image_shape").get<std::vector<std::size_t>>());
    b.class_names = meta.at("class_names").get<std::vector<std::string>>();
    const auto& fr = meta.at("fit_report");
    fr.at("noise_mse_floor").get_to(b.report.noise_mse_floor);
    fr.at("noise_mse_heldout").get_to(b.report.noise_mse_heldout);
    fr.at("embedding_gain").get_to(b.report.embedding_gain);
    fr.at("train_accuracy").get_to(b.report.train_accuracy);
    fr.at("heldout_accuracy").get_to(b.report.heldout_accuracy);
    fr.at("gradient_check_error").get_to(b.report.gradient_check_error);
    fr.at("gradient_check_probes").get_to(b.report.gradient_check_probes);
    fr.at("gradient_check_inconclusive").get_to(b.report.gradient_check_inconclusive);
    fr.at("gradient_checks_passed").get_to(b.report.gradient_checks_passed);

    const auto n = static_cast<Eigen::Index>(b.image_shape.numel());
    const auto r = meta.at("predictor").at("embedding_dim").get<Eigen::Index>();
    const auto nn = static_cast<std::size_t>(n);
    GaussianPriorParams p;
    const auto mean = read_f32(dir / "prior_mean.f32", nn);
    p.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), n);
    p.basis = unflatten(read_f32(dir / "prior_basis.f32", nn * nn), n, n);
    const auto var = read_f32(dir / "prior_variances.f32", nn);
    p.variances = Eigen::Map<const Eigen::VectorXd>(var.data(), n);
    p.embed_proj = unflatten(read_f32(dir / "prior_embed_proj.f32", nn * static_cast<std::size_t>(r)), n, r);
    const auto schedule = compute_schedule(b.config.schedule);
    b.predictor = std::make_shared<GaussianNoisePredictor>(
        b.image_shape, std::vector<double>(schedule.alpha_bars().begin(), schedule.alpha_bars().end()),
        std::move(p));

    b.prompts = std::make_shared<PromptTable>(b.predictor->embedding_shape());
    const auto keys = meta.at("prompt_keys").get<std::vector<std::string>>();
    const auto dim = static_cast<std::size_t>(r);
    const auto blob = read_f32(dir / "prompts.f32", keys.size() * dim);
    for (std::size_t k = 0; k < keys.size(); ++k) {
      b.prompts->add_hashed(keys[k], Tensor(b.predictor->embedding_shape(),
                                            std::vector<double>(blob.begin() + static_cast<std::ptrdiff_t>(k * dim),
                                                                blob.begin() + static_cast<std::ptrdiff_t>((k + 1) * dim))));
    }

    for (const auto& c : meta.at("classifiers")) {
      const auto name = c.at("name").get<std::string>();
      auto model = std::make_shared<NetworkClassifier>(c.at("arch").get<NetworkArch>(), b.image_shape,
                                                       c.at("num_classes").get<std::size_t>(), 0);
      const auto count = c.at("param_count").get<std::size_t>();
      if (count != model->network().param_count()) {
        throw IoError(meta_path.string() + ": parameter count mismatch for classifier '" + name + "'");
      }
      const auto params = read_f32(dir / classifier_file(name), count);
      std::copy(params.begin(), params.end(), model->network().params().begin());
      b.classifiers.push_back({name, std::move(model)});
    }
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(meta_path.string() + ": " + e.what());
  }
}

}  // namespace latadv
