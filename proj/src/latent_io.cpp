#include "latadv/latent_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "latadv/error.hpp"

namespace latadv {

namespace fs = std::filesystem;

namespace {

fs::path with_suffix(const fs::path& stem, const char* suffix) {
  return fs::path(stem.string() + suffix);
}

std::array<unsigned char, 4> to_le(float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  return {static_cast<unsigned char>(bits & 0xffu), static_cast<unsigned char>((bits >> 8) & 0xffu),
          static_cast<unsigned char>((bits >> 16) & 0xffu),
          static_cast<unsigned char>((bits >> 24) & 0xffu)};
}

float from_le(const unsigned char* b) {
  const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                             (static_cast<std::uint32_t>(b[1]) << 8) |
                             (static_cast<std::uint32_t>(b[2]) << 16) |
                             (static_cast<std::uint32_t>(b[3]) << 24);
  return std::bit_cast<float>(bits);
}

}  // namespace

void write_f32(const fs::path& path, std::span<const double> values) {
  std::vector<unsigned char> bytes;
  bytes.reserve(values.size() * 4);
  for (double v : values) {
    const auto le = to_le(static_cast<float>(v));
    bytes.insert(bytes.end(), le.begin(), le.end());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<double> read_f32(const fs::path& path, std::size_t expected_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() != expected_count * 4) {
    throw IoError(path.string() + ": expected " + std::to_string(expected_count * 4) +
                  " bytes, found " + std::to_string(bytes.size()));
  }
  std::vector<double> out(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) out[i] = from_le(&bytes[i * 4]);
  return out;
}

void write_latent(const fs::path& stem, const Tensor& values, int timestep) {
  write_f32(with_suffix(stem, ".f32"), values.values());
  nlohmann::json meta{{"shape", values.shape().dims()}, {"timestep", timestep}, {"dtype", "f32le"}};
  std::ofstream out(with_suffix(stem, ".json"), std::ios::trunc);
  if (!out) throw IoError("cannot open " + with_suffix(stem, ".json").string());
  out << meta.dump(2) << "\n";
}

StoredLatent read_latent(const fs::path& stem) {
  const auto meta_path = with_suffix(stem, ".json");
  std::ifstream in(meta_path);
  if (!in) throw IoError("cannot open " + meta_path.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(meta_path.string() + ": " + e.what());
  }
  Shape shape(meta.at("shape").get<std::vector<std::size_t>>());
  auto data = read_f32(with_suffix(stem, ".f32"), shape.numel());
  return {Tensor(shape, std::move(data)), meta.at("timestep").get<int>()};
}

}  // namespace latadv
