#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "latadv/error.hpp"
#include "latadv/hash.hpp"
#include "latadv/harness/evaluation.hpp"
#include "latadv/harness/image_io.hpp"
#include "latadv/inversion/inversion.hpp"
#include "latadv/latent_io.hpp"
#include "latadv/models/dataset.hpp"
#include "latadv/pipeline/pipeline.hpp"
#include "latadv/pipeline/run_config.hpp"
#include "test_models.hpp"

using namespace latadv;
using latadv::testing::TempDir;
namespace fs = std::filesystem;

namespace {

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  return nlohmann::json::parse(in);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small dataset plus a config that fits and attacks in seconds.
RunConfig tiny_config(const fs::path& root, const std::string& out) {
  const fs::path data = root / "data";
  if (!fs::exists(data / "dataset.json")) {
    ToyDatasetOptions o;
    o.count = 360;
    save_dataset(data, generate_toy_dataset(o), 60);
  }
  RunConfig c = parse_config_text(
      "T = 10\n"
      "N_a = 3\n"
      "n_images = 4\n"
      "fit.surrogate_epochs = 4\n"
      "fit.target_epochs = 4\n");
  c.dataset = data;
  c.out = root / out;
  return c;
}

struct Command {
  int status = -1;
  std::string output;
};

Command run_cli(const std::string& args) {
  Command c;
  const std::string cmd = std::string(LATADV_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 512> buf{};
  while (fgets(buf.data(), buf.size(), pipe)) c.output += buf.data();
  const int raw = pclose(pipe);
  c.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return c;
}

}  // namespace

TEST_CASE("run config text round trip and key handling") {
  RunConfig c;
  CHECK(c.attack.steps == 50);
  CHECK(c.attack.eta == 0.04);
  CHECK(c.targets == std::vector<std::string>{"conv", "attention"});
  c.set("eta", "0.02");
  c.set("targets", "attention");
  c.set("defenses", "jpeg:50,bitred:4");
  c.set("rho_mode", "schedule-derived");
  c.set("fit.shrinkage", "0.1");
  CHECK(c.attack.eta == 0.02);
  CHECK(c.targets == std::vector<std::string>{"attention"});
  CHECK(c.defenses == std::vector<std::string>{"jpeg:50", "bitred:4"});
  const RunConfig back = parse_config_text(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(back.attack.rho_mode == RhoMode::schedule_derived);

  CHECK_THROWS_AS(c.set("gamma", "1"), ParameterError);
  CHECK_THROWS_AS(c.set("eta", "fast"), ParameterError);
  CHECK_THROWS_AS(c.set("N_a", "2.5"), ParameterError);
  CHECK_THROWS_AS(parse_config_text("eta 0.1\n"), ParameterError);
  const RunConfig commented = parse_config_text("# comment\n\n  kappa = 0.05  # inline\n");
  CHECK(commented.attack.kappa == 0.05);

  for (const auto& key : config_keys()) CHECK(c.to_text().find(key + " = ") != std::string::npos);
  RunConfig moved = c;
  moved.out = "elsewhere";
  moved.force = true;
  CHECK(moved.stage_text("all") == c.stage_text("all"));
  moved.attack.beta = 0.2;
  CHECK(moved.stage_text("attack") != c.stage_text("attack"));
  CHECK(moved.stage_text("fit-toy") == c.stage_text("fit-toy"));
}

TEST_CASE("config file loading") {
  TempDir dir("config");
  std::ofstream(dir.path() / "run.cfg") << "n_images = 8\nsurrogate = attention\n";
  const auto c = load_config_file(dir.path() / "run.cfg");
  CHECK(c.n_images == 8);
  CHECK(c.surrogate == "attention");
  CHECK_THROWS_AS(load_config_file(dir.path() / "none.cfg"), IoError);
}

TEST_CASE("missing dataset gives a clear error") {
  TempDir dir("nodata");
  RunConfig c;
  c.dataset = dir.path() / "absent";
  c.out = dir.path() / "out";
  std::ostringstream log;
  try {
    cmd_fit_toy(c, log);
    FAIL("expected an IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("absent") != std::string::npos);
  }
}

TEST_CASE("pipeline stages: resume, layout, manifest and stale-config refusal") {
  TempDir dir("pipeline");
  RunConfig c = tiny_config(dir.path(), "run");
  std::ostringstream log;
  const OutputLayout out{c.out};

  cmd_fit_toy(c, log);
  CHECK(fs::exists(out.bundle() / "bundle.json"));
  const auto manifest = read_json(out.manifest());
  CHECK(manifest.at("thresholds").at("min_mean_psnr_db") == 25.0);
  const std::string bundle_sha = manifest.at("stages").at("fit-toy").at("bundle_sha256");

  double psnr = 0.0;
  const auto first = cmd_invert(c, log, &psnr);
  CHECK(first.processed == 4);
  CHECK(first.failed == 0);
  double sum = 0.0;
  for (const auto& item : evaluation_items(c)) {
    sum += psnr_from_mse(load_record(out.record(item.id)).reconstruction_error);
  }
  CHECK(psnr == doctest::Approx(sum / 4.0).epsilon(1e-12));
  CHECK(read_json(out.manifest()).at("stages").at("invert").at("records") == 4);

  const auto again = cmd_invert(c, log);
  CHECK(again.processed == 0);
  CHECK(again.skipped == 4);

  const auto attacked = cmd_attack(c, log);
  CHECK(attacked.processed == 4);
  for (const auto& item : evaluation_items(c)) {
    CHECK(fs::exists(out.adversarial_png(item.id)));
    const auto result = read_json(out.result(item.id));
    CHECK(result.at("label") == item.label);
    const Tensor delta = read_latent(out.record(item.id) / "delta").values;
    CHECK(delta.max_abs() <= c.attack.kappa);
    const Tensor png = read_png(out.adversarial_png(item.id));
    for (double v : png.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  CHECK(delta_checksums(c).size() == 4);

  const auto report = cmd_evaluate(c, log);
  CHECK(fs::exists(out.report_csv()));
  CHECK(fs::exists(out.report_json()));
  CHECK(parse_report_csv(read_text(out.report_csv())) == report.rows);
  bool jpeg = false, bitred = false;
  for (const auto& row : report.rows) {
    jpeg |= row.defense == "jpeg" && row.defense_param == "75";
    bitred |= row.defense == "bitred" && row.defense_param == "3";
  }
  CHECK(jpeg);
  CHECK(bitred);
  CHECK(read_json(out.manifest()).at("stages").at("evaluate").at("report_csv_sha256") ==
        sha256_file(out.report_csv()));

  RunConfig changed = c;
  changed.attack.beta = 0.5;
  CHECK_THROWS_AS(cmd_attack(changed, log), ParameterError);
  changed.n_images = 2;
  changed.attack.beta = 0.1;
  CHECK_NOTHROW(cmd_evaluate(changed, log));

  // Same fit configuration and seed in a fresh directory: same weights.
  RunConfig twin = tiny_config(dir.path(), "twin");
  twin.attack.attack_iterations = 0;
  cmd_fit_toy(twin, log);
  CHECK(read_json(OutputLayout{twin.out}.manifest()).at("stages").at("fit-toy").at("bundle_sha256") ==
        bundle_sha);
  cmd_invert(twin, log);
  cmd_attack(twin, log);
  const auto bundle = load_bundle(OutputLayout{twin.out}.bundle());
  for (const auto& item : evaluation_items(twin)) {
    const auto record = load_record(OutputLayout{twin.out}.record(item.id));
    const Tensor adv = read_latent(OutputLayout{twin.out}.record(item.id) / "adversarial").values;
    Tensor expected = reconstruct(record, bundle.descriptor());
    round_to_float32(expected.values());
    CHECK(adv == expected);
  }
  CHECK(cmd_reconstruct(twin, log) > 0.0);
  CHECK(fs::exists(OutputLayout{twin.out}.reconstruction_png("img_0000")));
}

TEST_CASE("command-line tool") {
  const auto help = run_cli("--help");
  CHECK(help.status == 0);
  CHECK(help.output.find("fit-toy") != std::string::npos);
  CHECK(help.output.find("evaluate") != std::string::npos);

  TempDir dir("cli");
  const auto missing = run_cli("fit-toy --dataset " + (dir.path() / "absent").string() + " --out " +
                               (dir.path() / "out").string());
  CHECK(missing.status == 1);
  CHECK(missing.output.find("no dataset") != std::string::npos);

  const auto made = run_cli("make-dataset --dir " + (dir.path() / "data").string() +
                            " --count 60 --held-out 12");
  CHECK(made.status == 0);
  CHECK(load_dataset(dir.path() / "data").held_out == 12);

  const auto bad = run_cli("attack --set nonsense=1 --out " + (dir.path() / "out").string());
  CHECK(bad.status != 0);
  CHECK(bad.output.find("nonsense") != std::string::npos);
}
