// Command-line entry point: dataset generation, toy fitting, inversion,
// attack, evaluation and reconstruction over one output directory.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "latadv/error.hpp"
#include "latadv/pipeline/pipeline.hpp"

namespace {

struct Flags {
  std::optional<std::string> config_file;
  std::optional<std::string> out, dataset, backend, surrogate, prompts;
  std::optional<std::vector<std::string>> targets, defenses, sets;
  std::optional<std::uint64_t> seed;
  std::optional<double> eta, kappa, w;
  std::optional<int> na, ni, t;
  std::optional<std::size_t> n_images;
  bool force = false;
};

latadv::RunConfig resolve(const Flags& f) {
  latadv::RunConfig c;
  if (f.config_file) c = latadv::load_config_file(*f.config_file);
  if (f.sets) {
    for (const auto& kv : *f.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw latadv::ParameterError("--set expects key=value, got " + kv);
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
  }
  if (f.out) c.out = *f.out;
  if (f.dataset) c.dataset = *f.dataset;
  if (f.backend) c.backend = *f.backend;
  if (f.surrogate) c.surrogate = *f.surrogate;
  if (f.prompts) c.prompts = *f.prompts;
  if (f.targets) c.targets = *f.targets;
  if (f.defenses) c.defenses = *f.defenses;
  if (f.seed) c.attack.seed = *f.seed;
  if (f.eta) c.attack.eta = *f.eta;
  if (f.kappa) c.attack.kappa = *f.kappa;
  if (f.w) c.attack.guidance = *f.w;
  if (f.na) c.attack.attack_iterations = *f.na;
  if (f.ni) c.attack.inner_iterations = *f.ni;
  if (f.t) c.attack.steps = *f.t;
  if (f.n_images) c.n_images = *f.n_images;
  if (f.force) c.force = true;
  c.attack.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-space adversarial examples via diffusion inversion"};
  app.require_subcommand(1);
  app.fallthrough();

  Flags f;
  app.add_option("--config", f.config_file, "Flat key = value config file")->check(CLI::ExistingFile);
  app.add_option("--out", f.out, "Output directory");
  app.add_option("--dataset", f.dataset, "Dataset directory (from make-dataset)");
  app.add_option("--seed", f.seed, "Random seed");
  app.add_option("--backend", f.backend, "Backend name");
  app.add_option("--surrogate", f.surrogate, "Surrogate classifier name");
  app.add_option("--targets", f.targets, "Target classifier names")->delimiter(',');
  app.add_option("--prompts", f.prompts, "dataset | const:<text> | file:<path>");
  app.add_option("--eta", f.eta, "Attack step size");
  app.add_option("--kappa", f.kappa, "L-infinity budget on the latent perturbation");
  app.add_option("--na", f.na, "Attack iterations");
  app.add_option("--ni", f.ni, "Null-embedding iterations per step");
  app.add_option("--t", f.t, "DDIM steps");
  app.add_option("--w", f.w, "Guidance scale");
  app.add_option("--defense", f.defenses, "Defense, e.g. jpeg:75 or bitred:3 (repeatable)")
      ->delimiter(',');
  app.add_option("--n-images", f.n_images, "Number of held-out images to process");
  app.add_option("--set", f.sets, "Override any config key (key=value, repeatable)");
  app.add_flag("--force", f.force, "Recompute even if outputs exist");

  latadv::ToyDatasetOptions data;
  std::size_t held_out = 600;
  std::string data_dir = "data";
  auto* make = app.add_subcommand("make-dataset", "Generate the synthetic labeled image set");
  make->add_option("--dir", data_dir, "Directory to write");
  make->add_option("--count", data.count, "Total images");
  make->add_option("--held-out", held_out, "Images reserved for evaluation (taken from the end)");
  make->add_option("--side", data.side, "Image side in pixels");
  make->add_option("--data-seed", data.seed, "Generator seed");
  make->add_option("--amplitude", data.amplitude, "Pattern amplitude");

  auto* fit = app.add_subcommand("fit-toy", "Fit the toy diffusion backend and classifiers");
  auto* invert = app.add_subcommand("invert", "Map images to inversion records");
  auto* attack = app.add_subcommand("attack", "Run the latent attack on every record");
  auto* evaluate = app.add_subcommand("evaluate", "Write report.csv / report.json");
  auto* recon = app.add_subcommand("reconstruct", "Write reconstructions of every record");
  auto* run = app.add_subcommand("run", "fit-toy, invert, attack and evaluate in sequence");

  CLI11_PARSE(app, argc, argv);

  try {
    if (make->parsed()) {
      latadv::save_dataset(data_dir, latadv::generate_toy_dataset(data), held_out);
      std::cout << "make-dataset: wrote " << data.count << " images (" << held_out
                << " held out) to " << data_dir << "\n";
      return 0;
    }
    const latadv::RunConfig config = resolve(f);
    if (fit->parsed() || run->parsed()) latadv::cmd_fit_toy(config, std::cout);
    if (invert->parsed() || run->parsed()) {
      if (latadv::cmd_invert(config, std::cout).failed > 0) return 2;
    }
    if (attack->parsed() || run->parsed()) {
      if (latadv::cmd_attack(config, std::cout).failed > 0) return 2;
    }
    if (evaluate->parsed() || run->parsed()) latadv::cmd_evaluate(config, std::cout);
    if (recon->parsed()) latadv::cmd_reconstruct(config, std::cout);
  } catch (const latadv::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
