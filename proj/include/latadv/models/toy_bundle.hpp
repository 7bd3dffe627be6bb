#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "latadv/models/dataset.hpp"
#include "latadv/models/gaussian_predictor.hpp"
#include "latadv/models/network_classifier.hpp"
#include "latadv/models/prompt_table.hpp"
#include "latadv/models/registry.hpp"

namespace latadv {

inline constexpr int kBundleFormatVersion = 1;

struct ToyBundleConfig {
  ScheduleParams schedule;
  GaussianFitOptions prior;
  NetworkArch surrogate_arch{"conv", 8, 4};
  NetworkArch target_arch{"attention", 32, 4};
  TrainOptions surrogate_train{40, 32, 3e-3, 11};
  TrainOptions target_train{60, 32, 3e-3, 12};
  std::uint64_t seed = 0;
};

/// Metrics recorded while fitting; later checks are judged against them.
struct ToyFitReport {
  /// Noise-prediction MSE on noised training images (random t, eps).
  double noise_mse_floor = 0.0;
  double noise_mse_heldout = 0.0;
  double embedding_gain = 1.0;
  std::vector<double> train_accuracy;    // per classifier
  std::vector<double> heldout_accuracy;  // per classifier
  double gradient_check_error = 0.0;
  int gradient_check_probes = 0;
  int gradient_check_inconclusive = 0;
  bool gradient_checks_passed = false;
};

struct NamedClassifier {
  std::string name;
  std::shared_ptr<NetworkClassifier> model;
};

/// Desk-scale stand-in for a text-to-image backend plus a classifier zoo.
/// classifiers[0] is the default surrogate.
struct ToyBundle {
  ToyBundleConfig config;
  ToyFitReport report;
  Shape image_shape;
  std::vector<std::string> class_names;
  std::shared_ptr<GaussianNoisePredictor> predictor;
  std::shared_ptr<PromptTable> prompts;
  std::vector<NamedClassifier> classifiers;

  BackendDescriptor descriptor() const;
  /// Registers the backend under `backend_name` and every classifier.
  void register_into(Registry& registry, const std::string& backend_name) const;
};

/// Fits the prior and trains both classifiers, then runs finite-difference
/// gradient checks on every differentiable component.
ToyBundle fit_toy_bundle(const LabeledImages& train, const LabeledImages& heldout,
                         const ToyBundleConfig& config);

/// Same classifiers, prior refitted for another schedule. The embedding
/// gain is calibrated per schedule, so a bundle should map images with the
/// T it was fitted for; use this to obtain one for a different T.
ToyBundle refit_prior(const ToyBundle& base, const LabeledImages& train,
                      const LabeledImages& heldout, const ScheduleParams& schedule);

/// Noise-prediction MSE over noised copies of `data` with class-prompt
/// conditioning; timesteps and noise drawn from `seed`.
double noise_prediction_mse(const NoisePredictor& model, const PromptTable& prompts,
                            const DiffusionSchedule& schedule, const LabeledImages& data,
                            std::uint64_t seed);

/// Layout: bundle.json plus one .f32 blob per weight array.
void save_bundle(const std::filesystem::path& dir, const ToyBundle& bundle);
ToyBundle load_bundle(const std::filesystem::path& dir);

}  // namespace latadv
