#pragma once

#include <filesystem>
#include <vector>

#include "latadv/tensor.hpp"

namespace latadv {

/// [0, 1] doubles <-> 8-bit codes via round(clamp(x) * 255).
std::vector<unsigned char> to_bytes(const Tensor& image);
Tensor from_bytes(const std::vector<unsigned char>& bytes, const Shape& shape);

/// 8-bit RGB (or grey) PNG for an HWC image.
void write_png(const std::filesystem::path& path, const Tensor& image);
Tensor read_png(const std::filesystem::path& path);

}  // namespace latadv
