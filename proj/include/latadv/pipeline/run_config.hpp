#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "latadv/attack/attack.hpp"
#include "latadv/models/toy_bundle.hpp"

namespace latadv {

/// Everything one batch run needs. Serialised as flat `key = value` lines;
/// see config_keys() for the list.
struct RunConfig {
  std::string backend = "toy";
  std::filesystem::path dataset = "data";
  std::filesystem::path out = "out";
  /// "dataset" (per-image captions), "const:<text>" or "file:<path>" with
  /// one prompt per line, aligned with the evaluation images.
  std::string prompts = "dataset";
  std::string surrogate = "conv";
  std::vector<std::string> targets = {"conv", "attention"};
  std::size_t n_images = 64;
  AttackConfig attack;
  std::vector<std::string> defenses = {"jpeg:75", "bitred:3"};
  ToyBundleConfig fit;
  bool force = false;

  /// Sets one key from its text form. Throws ParameterError for unknown
  /// keys or unparsable values.
  void set(const std::string& key, const std::string& value);

  /// Canonical `key = value` text, one line per key in config_keys() order.
  std::string to_text() const;

  /// Subset of the canonical text that affects a stage's outputs; "all"
  /// gives every key except the output location and the force flag.
  std::string stage_text(const std::string& stage) const;
};

const std::vector<std::string>& config_keys();

/// Parses `key = value` lines; '#' starts a comment, blank lines are ignored.
RunConfig parse_config_text(const std::string& text, RunConfig base = {});
RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {});

}  // namespace latadv
