#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "latadv/tensor.hpp"

namespace latadv {

/// Labeled images plus one caption per image.
struct LabeledImages {
  Shape image_shape;
  std::vector<Tensor> images;
  std::vector<int> labels;
  std::vector<std::string> captions;
  std::vector<std::string> class_names;

  std::size_t size() const { return images.size(); }
};

struct ToyDatasetOptions {
  std::size_t count = 3000;
  std::size_t side = 16;
  std::uint64_t seed = 0;
  /// Pattern strength relative to the foreground/background colour gap.
  double amplitude = 0.4;
  /// Minimum L1 distance between the foreground and background colours.
  double min_contrast = 0.8;
  double pixel_noise = 0.02;
};

/// Names of the six smooth pattern classes, in label order.
const std::vector<std::string>& toy_class_names();

/// Caption used as the prompt for every image of a class.
std::string toy_caption(const std::string& class_name);

/// Images cycle through the classes (label = index mod 6), so every prefix
/// is close to balanced. Pixels are HWC in [0, 1], float32-representable.
LabeledImages generate_toy_dataset(const ToyDatasetOptions& options);

/// Splits off the last `held_out` images.
std::pair<LabeledImages, LabeledImages> split_tail(const LabeledImages& all, std::size_t held_out);

}  // namespace latadv

namespace latadv {

/// `<dir>/images.f32` plus `<dir>/dataset.json` (shape, labels, captions,
/// class names, held-out count).
void save_dataset(const std::filesystem::path& dir, const LabeledImages& data,
                  std::size_t held_out);

struct StoredDataset {
  LabeledImages all;
  std::size_t held_out = 0;
};
StoredDataset load_dataset(const std::filesystem::path& dir);

}  // namespace latadv
