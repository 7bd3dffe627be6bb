#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "latadv/tensor.hpp"

namespace latadv {

/// Raw little-endian float32 array (`<stem>.f32`) plus JSON sidecar
/// (`<stem>.json`) holding {"shape": [...], "timestep": level}.
void write_latent(const std::filesystem::path& stem, const Tensor& values, int timestep);

struct StoredLatent {
  Tensor values;
  int timestep = 0;
};
StoredLatent read_latent(const std::filesystem::path& stem);

/// Bare float32 blobs without sidecar, used for model weights.
void write_f32(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f32(const std::filesystem::path& path, std::size_t expected_count);

}  // namespace latadv
