#pragma once

#include <cstddef>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "latadv/harness/evaluation.hpp"
#include "latadv/pipeline/run_config.hpp"

namespace latadv {

/// Output layout under RunConfig::out.
struct OutputLayout {
  std::filesystem::path root;

  std::filesystem::path bundle() const { return root / "bundle"; }
  std::filesystem::path record(const std::string& id) const { return root / "records" / id; }
  std::filesystem::path adversarial_png(const std::string& id) const {
    return root / "adv" / (id + ".png");
  }
  std::filesystem::path result(const std::string& id) const {
    return root / "results" / (id + ".json");
  }
  std::filesystem::path reconstruction_png(const std::string& id) const {
    return root / "recon" / (id + ".png");
  }
  std::filesystem::path report_csv() const { return root / "report.csv"; }
  std::filesystem::path report_json() const { return root / "report.json"; }
  std::filesystem::path manifest() const { return root / "manifest.json"; }
};

/// Acceptance thresholds written to the manifest once the bundle is fitted.
struct FrozenThresholds {
  double min_mean_psnr_db = 25.0;
  double min_label_preservation = 0.90;
  double min_white_box_asr = 80.0;
  double min_transfer_margin_pp = 15.0;
  double max_heldout_noise_mse = 0.0;  // 2 x training floor
  double max_gradient_rel_error = 1e-3;
};

struct StageSummary {
  std::size_t processed = 0;
  std::size_t skipped = 0;  // already complete from an earlier run
  std::size_t failed = 0;
  std::vector<std::string> failures;
};

struct EvalItem {
  std::string id;
  Tensor image;
  int label = -1;
  std::string prompt;
};

/// The first n_images held-out images with ids img_0000, img_0001, ...
std::vector<EvalItem> evaluation_items(const RunConfig& config);

/// Fits (or, when bundle.json exists and the stage config is unchanged,
/// reuses) the toy bundle. Throws IoError when the dataset is missing.
ToyBundle cmd_fit_toy(const RunConfig& config, std::ostream& log);

/// Maps every evaluation image into an inversion record; images that already
/// have a record are skipped. Returns the mean reconstruction PSNR over all
/// records through `mean_psnr` when non-null.
StageSummary cmd_invert(const RunConfig& config, std::ostream& log, double* mean_psnr = nullptr);

/// Attacks every record that has no result yet; writes the adversarial PNG,
/// result JSON and the perturbation next to the record.
StageSummary cmd_attack(const RunConfig& config, std::ostream& log);

/// Builds the report from stored records and results and writes report.csv
/// and report.json.
EvalReport cmd_evaluate(const RunConfig& config, std::ostream& log);

/// Writes recon/<id>.png for every record; returns the mean PSNR.
double cmd_reconstruct(const RunConfig& config, std::ostream& log);

/// SHA-256 per perturbation file, keyed by image id.
std::vector<std::pair<std::string, std::string>> delta_checksums(const RunConfig& config);

/// Code version string recorded in manifests.
std::string code_version();

}  // namespace latadv
