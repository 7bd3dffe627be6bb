#include "latadv/pipeline/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "latadv/error.hpp"
#include "latadv/harness/image_io.hpp"
#include "latadv/hash.hpp"
#include "latadv/latent_io.hpp"

#ifndef LATADV_VERSION
#define LATADV_VERSION "unknown"
#endif

namespace latadv {

namespace fs = std::filesystem;
using nlohmann::json;

std::string code_version() { return std::string("latadv ") + LATADV_VERSION; }

namespace {

// ---- manifest ---------------------------------------------------------------

json read_manifest(const OutputLayout& out) {
  std::ifstream in(out.manifest());
  if (!in) return json::object();
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(out.manifest().string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw IoError("cannot write " + path.string());
}

void write_manifest(const OutputLayout& out, const json& manifest) {
  write_text(out.manifest(), manifest.dump(2) + "\n");
}

/// Refuses to mix outputs from different configurations unless forced.
void check_stage(const RunConfig& config, const std::string& stage, json& manifest) {
  const std::string hash = sha256_hex(config.stage_text(stage));
  auto& stages = manifest["stages"];
  if (stages.contains(stage) && stages[stage].value("config_hash", "") != hash && !config.force) {
    throw ParameterError("output directory " + config.out.string() + " holds '" + stage +
                         "' results from a different configuration; use a fresh --out or --force");
  }
  manifest["code_version"] = code_version();
  manifest["config_hash"] = sha256_hex(config.stage_text("all"));
  stages[stage]["config_hash"] = hash;
}

std::string bundle_checksum(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".f32") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string joined;
  for (const auto& f : files) joined += f.filename().string() + ":" + sha256_file(f) + "\n";
  return sha256_hex(joined);
}

// ---- shared context ------------------------------------------------------------

struct Context {
  ToyBundle bundle;
  Registry registry;
  BackendHandle backend;
};

Context load_context(const RunConfig& config) {
  const OutputLayout out{config.out};
  Context ctx{load_bundle(out.bundle()), {}, {}};
  ctx.bundle.register_into(ctx.registry, "toy");
  ctx.backend = ctx.registry.backend(config.backend);
  return ctx;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read prompt file " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> record_ids(const OutputLayout& out) {
  std::vector<std::string> ids;
  const auto dir = out.root / "records";
  if (!fs::exists(dir)) return ids;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (fs::exists(e.path() / "record.json")) ids.push_back(e.path().filename().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

json result_json(const AttackResult& r, const std::string& surrogate,
                 const std::string& delta_sha) {
  json targets = json::array();
  for (const auto& t : r.targets) {
    targets.push_back({{"name", t.name}, {"predicted", t.predicted}, {"success", t.success}});
  }
  return {{"image_id", r.image_id},
          {"label", r.label},
          {"surrogate", surrogate},
          {"surrogate_prediction", r.surrogate_prediction},
          {"surrogate_success", r.surrogate_success},
          {"targets", targets},
          {"loss_trace", r.loss_trace},
          {"delta_linf_trace", r.delta_linf_trace},
          {"stalled_iterations", r.stalled_iterations},
          {"delta_sha256", delta_sha},
          {"seconds", r.seconds}};
}

}  // namespace

std::vector<EvalItem> evaluation_items(const RunConfig& config) {
  const auto stored = load_dataset(config.dataset);
  const auto [train, eval] = split_tail(stored.all, stored.held_out);
  (void)train;
  if (config.n_images > eval.size()) {
    throw ParameterError("requested " + std::to_string(config.n_images) + " images but the dataset holds " +
                         std::to_string(eval.size()) + " held-out images");
  }
  std::vector<std::string> prompts;
  if (config.prompts == "dataset") {
    prompts = eval.captions;
  } else if (config.prompts.rfind("const:", 0) == 0) {
    prompts.assign(eval.size(), config.prompts.substr(6));
  } else if (config.prompts.rfind("file:", 0) == 0) {
    prompts = read_lines(config.prompts.substr(5));
    if (prompts.size() < config.n_images) throw ParameterError("prompt file has too few lines");
  } else {
    throw ParameterError("prompts must be 'dataset', 'const:<text>' or 'file:<path>'");
  }
  std::vector<EvalItem> items;
  for (std::size_t i = 0; i < config.n_images; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "img_%04zu", i);
    items.push_back({id, eval.images[i], eval.labels[i], prompts[i]});
  }
  return items;
}

ToyBundle cmd_fit_toy(const RunConfig& config, std::ostream& log) {
  const OutputLayout out{config.out};
  json manifest = read_manifest(out);
  const bool had_stage = manifest.contains("stages") && manifest["stages"].contains("fit-toy");
  check_stage(config, "fit-toy", manifest);
  if (had_stage && !config.force && fs::exists(out.bundle() / "bundle.json")) {
    log << "fit-toy: reusing bundle at " << out.bundle().string() << "\n";
    return load_bundle(out.bundle());
  }
  const auto stored = load_dataset(config.dataset);
  const auto [train, heldout] = split_tail(stored.all, stored.held_out);
  if (train.size() == 0 || heldout.size() == 0) {
    throw ParameterError("dataset needs both training and held-out images");
  }
  ToyBundleConfig fit = config.fit;
  fit.seed = config.attack.seed;
  fit.schedule.steps = config.attack.steps > 0 ? config.attack.steps : 1;
  fit.prior.guidance = config.attack.guidance;
  fit.prior.null_step = config.attack.zeta;
  const ToyBundle bundle = fit_toy_bundle(train, heldout, fit);
  const auto& r = bundle.report;
  log << "fit-toy: noise MSE floor " << r.noise_mse_floor << ", held-out " << r.noise_mse_heldout
      << "\n";
  for (std::size_t i = 0; i < bundle.classifiers.size(); ++i) {
    log << "fit-toy: " << bundle.classifiers[i].name << " accuracy train "
        << r.train_accuracy[i] << ", held-out " << r.heldout_accuracy[i] << "\n";
  }
  log << "fit-toy: gradient check max relative error " << r.gradient_check_error << " over "
      << r.gradient_check_probes << " probes\n";
  const double chance = 1.0 / static_cast<double>(bundle.class_names.size());
  for (double acc : r.heldout_accuracy) {
    if (!(acc > chance)) {
      throw Error("fit-toy: classifier failed to beat chance (held-out accuracy " +
                  std::to_string(acc) + ")");
    }
  }
  if (!r.gradient_checks_passed) {
    throw Error("fit-toy: gradient checks failed (max relative error " +
                std::to_string(r.gradient_check_error) + ")");
  }
  save_bundle(out.bundle(), bundle);

  FrozenThresholds t;
  t.max_heldout_noise_mse = 2.0 * r.noise_mse_floor;
  manifest["stages"]["fit-toy"]["bundle_sha256"] = bundle_checksum(out.bundle());
  manifest["thresholds"] = {{"min_mean_psnr_db", t.min_mean_psnr_db},
                            {"min_label_preservation", t.min_label_preservation},
                            {"min_white_box_asr", t.min_white_box_asr},
                            {"min_transfer_margin_pp", t.min_transfer_margin_pp},
                            {"max_heldout_noise_mse", t.max_heldout_noise_mse},
                            {"max_gradient_rel_error", t.max_gradient_rel_error}};
  write_manifest(out, manifest);
  write_text(out.root / "config.txt", config.to_text());
  log << "fit-toy: bundle written to " << out.bundle().string() << "\n";
  return bundle;
}

StageSummary cmd_invert(const RunConfig& config, std::ostream& log, double* mean_psnr) {
  const OutputLayout out{config.out};
  json manifest = read_manifest(out);
  check_stage(config, "invert", manifest);
  const Context ctx = load_context(config);
  const InversionConfig inv = config.attack.inversion();

  StageSummary s;
  for (const auto& item : evaluation_items(config)) {
    const auto dir = out.record(item.id);
    if (!config.force && fs::exists(dir / "record.json")) {
      ++s.skipped;
      continue;
    }
    try {
      save_record(dir, map_image(*ctx.backend, item.image, item.prompt, inv, item.id));
      ++s.processed;
    } catch (const std::exception& e) {
      ++s.failed;
      s.failures.push_back(item.id + ": " + e.what());
      log << "invert: " << item.id << " failed: " << e.what() << "\n";
    }
  }

  double psnr_sum = 0.0;
  const auto ids = record_ids(out);
  for (const auto& id : ids) {
    const auto rec = load_record(out.record(id));
    psnr_sum += psnr_from_mse(rec.reconstruction_error);
  }
  const double mean = ids.empty() ? 0.0 : psnr_sum / static_cast<double>(ids.size());
  if (mean_psnr) *mean_psnr = mean;
  manifest["stages"]["invert"]["records"] = ids.size();
  manifest["stages"]["invert"]["mean_psnr_db"] = mean;
  write_manifest(out, manifest);
  log << "invert: " << s.processed << " mapped, " << s.skipped << " already present, " << s.failed
      << " failed; mean reconstruction PSNR " << mean << " dB over " << ids.size()
      << " records\n";
  return s;
}

StageSummary cmd_attack(const RunConfig& config, std::ostream& log) {
  const OutputLayout out{config.out};
  json manifest = read_manifest(out);
  check_stage(config, "attack", manifest);
  const Context ctx = load_context(config);
  const auto surrogate = ctx.registry.classifier(config.surrogate);
  std::vector<NamedTarget> targets;
  std::vector<ClassifierHandle> keep;
  for (const auto& name : config.targets) {
    keep.push_back(ctx.registry.classifier(name));
    targets.push_back({name, keep.back().get()});
  }

  StageSummary s;
  std::size_t white_box_hits = 0, total = 0;
  for (const auto& item : evaluation_items(config)) {
    const auto rec_dir = out.record(item.id);
    if (!fs::exists(rec_dir / "record.json")) continue;
    if (!config.force && fs::exists(out.result(item.id))) {
      ++s.skipped;
    } else {
      try {
        const auto record = load_record(rec_dir);
        const auto r = run_attack(record, *ctx.backend, *surrogate, item.label, config.attack, targets);
        write_latent(rec_dir / "delta", r.delta, record.steps());
        write_latent(rec_dir / "adversarial", r.adversarial_image, 0);
        fs::create_directories(out.adversarial_png(item.id).parent_path());
        write_png(out.adversarial_png(item.id), r.adversarial_image);
        write_text(out.result(item.id),
                   result_json(r, config.surrogate, sha256_file(rec_dir / "delta.f32")).dump(1) + "\n");
        ++s.processed;
      } catch (const std::exception& e) {
        ++s.failed;
        s.failures.push_back(item.id + ": " + e.what());
        log << "attack: " << item.id << " failed: " << e.what() << "\n";
        continue;
      }
    }
    std::ifstream in(out.result(item.id));
    const auto res = json::parse(in);
    white_box_hits += res.at("surrogate_success").get<bool>() ? 1 : 0;
    ++total;
  }
  const double asr = total ? 100.0 * static_cast<double>(white_box_hits) / static_cast<double>(total) : 0.0;
  json deltas = json::object();
  for (const auto& [id, sha] : delta_checksums(config)) deltas[id] = sha;
  manifest["stages"]["attack"]["white_box_asr"] = asr;
  manifest["stages"]["attack"]["delta_sha256"] = deltas;
  write_manifest(out, manifest);
  log << "attack: " << s.processed << " attacked, " << s.skipped << " already present, "
      << s.failed << " failed; white-box ASR on " << config.surrogate << " " << asr << "% over "
      << total << " images\n";
  return s;
}

EvalReport cmd_evaluate(const RunConfig& config, std::ostream& log) {
  const OutputLayout out{config.out};
  json manifest = read_manifest(out);
  check_stage(config, "evaluate", manifest);
  const Context ctx = load_context(config);

  ReportInputs in;
  AdversarialSet adv{config.surrogate, {}, {}, {}};
  std::size_t recorded_hits = 0;
  for (const auto& item : evaluation_items(config)) {
    in.image_ids.push_back(item.id);
    in.clean.push_back(item.image);
    in.labels.push_back(item.label);
    const auto rec_dir = out.record(item.id);
    if (!fs::exists(rec_dir / "record.json")) {
      throw IoError("missing inversion record for " + item.id + "; run invert first");
    }
    in.reconstructions.push_back(reconstruct(load_record(rec_dir), *ctx.backend));
    if (!fs::exists(out.result(item.id))) {
      throw IoError("missing attack result for " + item.id + "; run attack first");
    }
    adv.image_ids.push_back(item.id);
    adv.images.push_back(read_latent(rec_dir / "adversarial").values);
    adv.labels.push_back(item.label);
    std::ifstream res_in(out.result(item.id));
    recorded_hits += json::parse(res_in).at("surrogate_success").get<bool>() ? 1 : 0;
  }
  in.adversarial.push_back(std::move(adv));

  std::vector<DefenseSpec> defenses;
  for (const auto& d : config.defenses) defenses.push_back(parse_defense(d));
  const EvalReport report = build_report(in, ctx.registry, config.targets, defenses);
  write_report(report, out.report_csv(), "csv");
  write_report(report, out.report_json(), "json");

  const auto& m = report.transfer;
  for (std::size_t s = 0; s < m.surrogates.size(); ++s) {
    for (std::size_t t = 0; t < m.targets.size(); ++t) {
      log << "evaluate: " << m.surrogates[s] << " -> " << m.targets[t] << " ASR " << m.asr[s][t]
          << "%" << (m.white_box(s, t) ? " (white-box)" : "") << "\n";
    }
    log << "evaluate: black-box average for " << m.surrogates[s] << " "
        << m.black_box_average(s) << "%\n";
  }
  const auto& targets = config.targets;
  if (std::find(targets.begin(), targets.end(), config.surrogate) != targets.end() &&
      !in.clean.empty()) {
    const double recorded = 100.0 * static_cast<double>(recorded_hits) / static_cast<double>(in.clean.size());
    const double recomputed = report.asr(config.surrogate, config.surrogate, "aca");
    log << "evaluate: white-box ASR recorded by attack " << recorded << "%, recomputed "
        << recomputed << "%" << (recorded == recomputed ? "" : " (MISMATCH)") << "\n";
  }
  manifest["stages"]["evaluate"]["report_csv_sha256"] = sha256_file(out.report_csv());
  write_manifest(out, manifest);
  log << "evaluate: wrote " << out.report_csv().string() << " and " << out.report_json().string()
      << "\n";
  return report;
}

double cmd_reconstruct(const RunConfig& config, std::ostream& log) {
  const OutputLayout out{config.out};
  const Context ctx = load_context(config);
  const auto ids = record_ids(out);
  double sum = 0.0;
  for (const auto& id : ids) {
    const auto rec = load_record(out.record(id));
    const Tensor x = reconstruct(rec, *ctx.backend);
    fs::create_directories(out.reconstruction_png(id).parent_path());
    write_png(out.reconstruction_png(id), x);
    sum += psnr_from_mse(mean_squared_error(x, rec.source));
  }
  const double mean = ids.empty() ? 0.0 : sum / static_cast<double>(ids.size());
  log << "reconstruct: wrote " << ids.size() << " images, mean PSNR " << mean << " dB\n";
  return mean;
}

std::vector<std::pair<std::string, std::string>> delta_checksums(const RunConfig& config) {
  const OutputLayout out{config.out};
  std::vector<std::pair<std::string, std::string>> sums;
  for (const auto& id : record_ids(out)) {
    const auto path = out.record(id) / "delta.f32";
    if (fs::exists(path)) sums.emplace_back(id, sha256_file(path));
  }
  return sums;
}

}  // namespace latadv
