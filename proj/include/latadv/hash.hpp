#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace latadv {

/// Lowercase hex SHA-256 digests.
std::string sha256_hex(std::string_view bytes);
std::string sha256_hex(std::span<const double> values_as_f32le);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace latadv
