#include "latadv/harness/evaluation.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "latadv/error.hpp"

namespace latadv {

namespace {

constexpr const char* kCsvHeader =
    "surrogate,target,attack,n_images,asr_percent,defense,defense_param";

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void outcome_rows(EvalReport& report, const std::string& surrogate, const std::string& target,
                  const std::string& attack, const DefenseSpec* defense,
                  const std::vector<std::string>& ids, const std::vector<Tensor>& images,
                  const std::vector<int>& labels, const Classifier& model) {
  if (images.empty()) return;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Tensor x = defense ? defense->apply(images[i]) : images[i];
    const int p = predict_label(model, x);
    const bool success = p != labels[i];
    hits += success ? 1 : 0;
    report.outcomes.push_back({i < ids.size() ? ids[i] : std::to_string(i), labels[i], surrogate,
                               target, attack, defense ? defense->label() : "none", p, success});
  }
  ReportRow row{surrogate, target, attack, images.size(),
                100.0 * static_cast<double>(hits) / static_cast<double>(images.size())};
  if (defense) {
    row.defense = defense->name;
    row.defense_param = std::to_string(defense->param);
  }
  report.rows.push_back(std::move(row));
}

}  // namespace

double evaluate_asr(const std::vector<Tensor>& images, const std::vector<int>& labels,
                    const Classifier& classifier) {
  if (images.size() != labels.size()) throw ParameterError("images and labels differ in length");
  if (images.empty()) throw UndefinedResultError("ASR over an empty image set is undefined");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (predict_label(classifier, images[i]) != labels[i]) ++wrong;
  }
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(images.size());
}

double TransferMatrix::black_box_average(std::size_t s) const {
  double sum = 0.0;
  int n = 0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (white_box(s, t)) continue;
    sum += asr[s][t];
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / n;
}

TransferMatrix transfer_matrix(const std::vector<AdversarialSet>& sets,
                               const std::vector<std::string>& targets, const Registry& registry) {
  TransferMatrix m;
  m.targets = targets;
  std::vector<ClassifierHandle> models;
  for (const auto& t : targets) models.push_back(registry.classifier(t));
  for (const auto& set : sets) {
    m.surrogates.push_back(set.surrogate);
    std::vector<double> row;
    for (const auto& model : models) row.push_back(evaluate_asr(set.images, set.labels, *model));
    m.asr.push_back(std::move(row));
  }
  return m;
}

double EvalReport::asr(const std::string& surrogate, const std::string& target,
                       const std::string& attack, const std::string& defense) const {
  for (const auto& r : rows) {
    if (r.surrogate == surrogate && r.target == target && r.attack == attack &&
        r.defense == defense) {
      return r.asr_percent;
    }
  }
  throw UndefinedResultError("no report row for " + surrogate + " -> " + target + " (" + attack +
                             ", " + defense + ")");
}

EvalReport build_report(const ReportInputs& in, const Registry& registry,
                        const std::vector<std::string>& targets,
                        const std::vector<DefenseSpec>& defenses) {
  if (in.clean.size() != in.labels.size()) throw ParameterError("clean images and labels differ");
  if (!in.reconstructions.empty() && in.reconstructions.size() != in.clean.size()) {
    throw ParameterError("reconstructions and clean images differ in count");
  }
  EvalReport report;
  report.transfer = transfer_matrix(in.adversarial, targets, registry);
  std::vector<const DefenseSpec*> passes{nullptr};
  for (const auto& d : defenses) passes.push_back(&d);
  for (const DefenseSpec* defense : passes) {
    for (const auto& t : targets) {
      const auto model = registry.classifier(t);
      outcome_rows(report, "-", t, "clean", defense, in.image_ids, in.clean, in.labels, *model);
      outcome_rows(report, "-", t, "ilm", defense, in.image_ids, in.reconstructions, in.labels,
                   *model);
      for (const auto& set : in.adversarial) {
        outcome_rows(report, set.surrogate, t, "aca", defense, set.image_ids, set.images,
                     set.labels, *model);
      }
    }
  }
  return report;
}

std::string report_csv(const EvalReport& report) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : report.rows) {
    out += r.surrogate + "," + r.target + "," + r.attack + "," + std::to_string(r.n_images) + "," +
           format_double(r.asr_percent) + "," + r.defense + "," + r.defense_param + "\n";
  }
  return out;
}

std::vector<ReportRow> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw ParameterError("unexpected CSV header");
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 7) throw ParameterError("malformed CSV row: " + line);
    ReportRow r{f[0], f[1], f[2], std::stoul(f[3]), 0.0, f[5], f[6]};
    const auto res = std::from_chars(f[4].data(), f[4].data() + f[4].size(), r.asr_percent);
    if (res.ec != std::errc()) throw ParameterError("bad ASR value: " + f[4]);
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace {

nlohmann::json to_json_doc(const EvalReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"surrogate", r.surrogate}, {"target", r.target}, {"attack", r.attack},
                    {"n_images", r.n_images}, {"asr_percent", r.asr_percent},
                    {"defense", r.defense}, {"defense_param", r.defense_param}});
  }
  nlohmann::json outcomes = nlohmann::json::array();
  for (const auto& o : report.outcomes) {
    outcomes.push_back({{"image_id", o.image_id}, {"label", o.label}, {"surrogate", o.surrogate},
                        {"target", o.target}, {"attack", o.attack}, {"defense", o.defense},
                        {"predicted", o.predicted}, {"success", o.success}});
  }
  const auto& m = report.transfer;
  nlohmann::json averages = nlohmann::json::array();
  for (std::size_t s = 0; s < m.surrogates.size(); ++s) {
    const double avg = m.black_box_average(s);
    averages.push_back(std::isnan(avg) ? nlohmann::json(nullptr) : nlohmann::json(avg));
  }
  return {{"rows", rows},
          {"transfer", {{"surrogates", m.surrogates}, {"targets", m.targets}, {"asr", m.asr},
                        {"black_box_average", averages}}},
          {"outcomes", outcomes}};
}

}  // namespace

void write_report(const EvalReport& report, const std::filesystem::path& path,
                  const std::string& format) {
  std::string text;
  if (format == "csv") {
    text = report_csv(report);
  } else if (format == "json") {
    text = to_json_doc(report).dump(1) + "\n";
  } else {
    throw ParameterError("unknown report format '" + format + "'");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw IoError("cannot write report to " + path.string());
}

EvalReport read_report_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read report " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    EvalReport r;
    for (const auto& row : j.at("rows")) {
      r.rows.push_back({row.at("surrogate"), row.at("target"), row.at("attack"),
                        row.at("n_images"), row.at("asr_percent"), row.at("defense"),
                        row.at("defense_param")});
    }
    const auto& m = j.at("transfer");
    m.at("surrogates").get_to(r.transfer.surrogates);
    m.at("targets").get_to(r.transfer.targets);
    m.at("asr").get_to(r.transfer.asr);
    for (const auto& o : j.at("outcomes")) {
      r.outcomes.push_back({o.at("image_id"), o.at("label"), o.at("surrogate"), o.at("target"),
                            o.at("attack"), o.at("defense"), o.at("predicted"), o.at("success")});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace latadv
