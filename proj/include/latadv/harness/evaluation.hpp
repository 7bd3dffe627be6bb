#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "latadv/harness/defenses.hpp"
#include "latadv/models/registry.hpp"

namespace latadv {

/// 100 * (# predicted != label) / N. Throws UndefinedResultError for N = 0.
double evaluate_asr(const std::vector<Tensor>& images, const std::vector<int>& labels,
                    const Classifier& classifier);

/// Images crafted against one surrogate.
struct AdversarialSet {
  std::string surrogate;
  std::vector<std::string> image_ids;
  std::vector<Tensor> images;
  std::vector<int> labels;
};

struct TransferMatrix {
  std::vector<std::string> surrogates;
  std::vector<std::string> targets;
  std::vector<std::vector<double>> asr;  // [surrogate][target]

  bool white_box(std::size_t s, std::size_t t) const { return surrogates[s] == targets[t]; }
  /// Mean over targets other than the surrogate itself; NaN when none.
  double black_box_average(std::size_t s) const;
};

/// Targets are resolved through the registry (RegistryError if unknown).
TransferMatrix transfer_matrix(const std::vector<AdversarialSet>& sets,
                               const std::vector<std::string>& targets, const Registry& registry);

/// One CSV row. Column order: surrogate, target, attack, n_images,
/// asr_percent, defense, defense_param. Rows that do not depend on a
/// surrogate (clean images, plain reconstructions) use "-"; undefended
/// rows use defense "none" and parameter "-".
struct ReportRow {
  std::string surrogate;
  std::string target;
  std::string attack;  // "clean", "ilm" or "aca"
  std::size_t n_images = 0;
  double asr_percent = 0.0;
  std::string defense = "none";
  std::string defense_param = "-";

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct ImageOutcome {
  std::string image_id;
  int label = -1;
  std::string surrogate;
  std::string target;
  std::string attack;
  std::string defense;
  int predicted = -1;
  bool success = false;

  friend bool operator==(const ImageOutcome&, const ImageOutcome&) = default;
};

struct EvalReport {
  std::vector<ReportRow> rows;
  TransferMatrix transfer;
  std::vector<ImageOutcome> outcomes;

  /// ASR of the row matching all keys; throws UndefinedResultError if absent.
  double asr(const std::string& surrogate, const std::string& target, const std::string& attack,
             const std::string& defense = "none") const;
};

struct ReportInputs {
  std::vector<std::string> image_ids;
  std::vector<Tensor> clean;
  /// Optional; same order as `clean`.
  std::vector<Tensor> reconstructions;
  std::vector<int> labels;
  std::vector<AdversarialSet> adversarial;
};

/// Rows for every registered target: clean baseline, reconstructions (if
/// given) and each adversarial set, first undefended and then once per
/// defense. Defended rows evaluate the fixed images through the defense.
EvalReport build_report(const ReportInputs& inputs, const Registry& registry,
                        const std::vector<std::string>& targets,
                        const std::vector<DefenseSpec>& defenses);

std::string report_csv(const EvalReport& report);
std::vector<ReportRow> parse_report_csv(const std::string& text);

/// `format` is "csv" or "json"; I/O failures raise IoError naming the path.
void write_report(const EvalReport& report, const std::filesystem::path& path,
                  const std::string& format);
EvalReport read_report_json(const std::filesystem::path& path);

}  // namespace latadv
