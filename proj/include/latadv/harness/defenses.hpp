#pragma once

#include <string>

#include "latadv/tensor.hpp"

namespace latadv {

/// Encode/decode through baseline JPEG at `quality` in [1, 100]. Input is
/// an HWC image with 1 or 3 channels in [0, 1]; pixels pass through 8 bits.
Tensor jpeg_defense(const Tensor& image, int quality);

/// Quantize each value to 2^bits levels with midpoint reconstruction:
/// q = min(floor(x * L), L - 1), out = (q + 0.5) / L. bits in [1, 8].
Tensor bit_depth_reduce(const Tensor& image, int bits);
double bit_depth_reduce(double x, int bits);

/// A named, parameterised input transform applied before classification.
struct DefenseSpec {
  std::string name;  // "jpeg" or "bitred"
  int param = 0;

  Tensor apply(const Tensor& image) const;
  std::string label() const { return name + ":" + std::to_string(param); }
};

/// Parses "jpeg", "jpeg:75", "bitred", "bitred:3". Defaults: quality 75, 3 bits.
DefenseSpec parse_defense(const std::string& text);

}  // namespace latadv
