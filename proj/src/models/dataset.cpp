#include "latadv/models/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <cmath>
#include <numbers>
#include <random>

#include "json.hpp"
#include "latadv/error.hpp"
#include "latadv/latent_io.hpp"

namespace latadv {

namespace {

class PatternSampler {
 public:
  PatternSampler(std::size_t side, std::mt19937_64& rng) : side_(side), rng_(rng) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double jitter() { return uniform(-0.1, 0.1); }

  // Mask in [0, 1] for one class; coordinates are normalised to [0, 1].
  std::vector<double> mask(int label) {
    std::vector<double> m(side_ * side_);
    const double r = uniform(0.12, 0.2);
    auto coord = [&](std::size_t i) { return static_cast<double>(i) / static_cast<double>(side_ - 1); };
    auto blob = [&](double cx, double cy, double radius, double x, double y) {
      return std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2.0 * radius * radius));
    };
    switch (label) {
      case 0: {
        const double cx = 0.5 + jitter(), cy = 0.5 + jitter();
        fill(m, [&](double x, double y) { return blob(cx, cy, 1.4 * r, x, y); }, coord);
        break;
      }
      case 1:
      case 2: {
        const bool across = label == 1;
        const double a1 = 0.25 + jitter(), b1 = 0.5 + jitter();
        const double a2 = 0.75 + jitter(), b2 = 0.5 + jitter();
        fill(m, [&](double x, double y) {
          if (!across) std::swap(x, y);
          return std::max(blob(a1, b1, r, x, y), blob(a2, b2, r, x, y));
        }, coord);
        break;
      }
      case 3:
      case 4: {
        const double f = uniform(1.5, 2.5), phase = uniform(0.0, 1.0);
        fill(m, [&](double x, double y) {
          const double u = label == 3 ? y : x;
          return 0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * (f * u + phase));
        }, coord);
        break;
      }
      default: {
        const double slope = uniform(0.8, 1.2);
        const double dir = uniform(0.0, 1.0) < 0.5 ? 1.0 : -1.0;
        const double off = jitter();
        fill(m, [&](double x, double y) {
          return std::clamp(0.5 + (x - y) * slope * dir + off, 0.0, 1.0);
        }, coord);
        break;
      }
    }
    return m;
  }

 private:
  template <class F, class C>
  void fill(std::vector<double>& m, F&& f, C&& coord) {
    for (std::size_t y = 0; y < side_; ++y) {
      for (std::size_t x = 0; x < side_; ++x) m[y * side_ + x] = f(coord(x), coord(y));
    }
  }

  std::size_t side_;
  std::mt19937_64& rng_;
};

}  // namespace

const std::vector<std::string>& toy_class_names() {
  static const std::vector<std::string> names = {"blob",        "pair",           "stack",
                                                 "horizontal stripes", "vertical stripes", "ramp"};
  return names;
}

std::string toy_caption(const std::string& class_name) { return "a picture of a " + class_name; }

LabeledImages generate_toy_dataset(const ToyDatasetOptions& options) {
  if (options.side < 4) throw ParameterError("image side must be at least 4");
  if (options.min_contrast < 0.0 || options.min_contrast > 2.0) {
    throw ParameterError("min_contrast must lie in [0, 2]");
  }
  const auto& names = toy_class_names();
  const std::size_t s = options.side;
  std::mt19937_64 rng(options.seed);
  PatternSampler sampler(s, rng);
  std::normal_distribution<double> noise(0.0, options.pixel_noise);

  LabeledImages out;
  out.image_shape = Shape{s, s, 3};
  out.class_names = names;
  for (std::size_t i = 0; i < options.count; ++i) {
    const int label = static_cast<int>(i % names.size());
    double bg[3], fg[3];
    for (double& v : bg) v = sampler.uniform(0.05, 0.95);
    do {
      for (double& v : fg) v = sampler.uniform(0.05, 0.95);
    } while (std::abs(fg[0] - bg[0]) + std::abs(fg[1] - bg[1]) + std::abs(fg[2] - bg[2]) <
             options.min_contrast);
    const auto m = sampler.mask(label);
    Tensor img(out.image_shape);
    for (std::size_t p = 0; p < s * s; ++p) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = bg[c] + (fg[c] - bg[c]) * options.amplitude * m[p] +
                         (options.pixel_noise > 0.0 ? noise(rng) : 0.0);
        img[p * 3 + c] = std::clamp(v, 0.0, 1.0);
      }
    }
    round_to_float32(img.values());
    out.images.push_back(std::move(img));
    out.labels.push_back(label);
    out.captions.push_back(toy_caption(names[static_cast<std::size_t>(label)]));
  }
  return out;
}

std::pair<LabeledImages, LabeledImages> split_tail(const LabeledImages& all, std::size_t held_out) {
  if (held_out > all.size()) throw ParameterError("held-out count exceeds dataset size");
  const auto cut = static_cast<std::ptrdiff_t>(all.size() - held_out);
  auto part = [&](std::ptrdiff_t lo, std::ptrdiff_t hi) {
    LabeledImages p;
    p.image_shape = all.image_shape;
    p.class_names = all.class_names;
    p.images.assign(all.images.begin() + lo, all.images.begin() + hi);
    p.labels.assign(all.labels.begin() + lo, all.labels.begin() + hi);
    p.captions.assign(all.captions.begin() + lo, all.captions.begin() + hi);
    return p;
  };
  return {part(0, cut), part(cut, static_cast<std::ptrdiff_t>(all.size()))};
}

}  // namespace latadv


namespace latadv {

void save_dataset(const std::filesystem::path& dir, const LabeledImages& data,
                  std::size_t held_out) {
  std::filesystem::create_directories(dir);
  std::vector<double> flat;
  flat.reserve(data.size() * data.image_shape.numel());
  for (const auto& img : data.images) flat.insert(flat.end(), img.values().begin(), img.values().end());
  write_f32(dir / "images.f32", flat);
  nlohmann::json meta = {{"shape", data.image_shape.dims()},
                         {"count", data.size()},
                         {"held_out", held_out},
                         {"labels", data.labels},
                         {"captions", data.captions},
                         {"class_names", data.class_names}};
  std::ofstream out(dir / "dataset.json");
  if (!(out << meta.dump(1) << '\n')) throw IoError("cannot write " + (dir / "dataset.json").string());
}

StoredDataset load_dataset(const std::filesystem::path& dir) {
  const auto meta_path = dir / "dataset.json";
  std::ifstream in(meta_path);
  if (!in) throw IoError("no dataset at " + dir.string() + " (missing dataset.json)");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(meta_path.string() + ": " + e.what());
  }
  StoredDataset out;
  out.all.image_shape = Shape(meta.at("shape").get<std::vector<std::size_t>>());
  const auto count = meta.at("count").get<std::size_t>();
  out.held_out = meta.at("held_out").get<std::size_t>();
  out.all.labels = meta.at("labels").get<std::vector<int>>();
  out.all.captions = meta.at("captions").get<std::vector<std::string>>();
  out.all.class_names = meta.at("class_names").get<std::vector<std::string>>();
  if (out.all.labels.size() != count || out.all.captions.size() != count || out.held_out > count) {
    throw IoError(meta_path.string() + ": inconsistent counts");
  }
  const std::size_t n = out.all.image_shape.numel();
  const auto flat = read_f32(dir / "images.f32", count * n);
  for (std::size_t i = 0; i < count; ++i) {
    out.all.images.emplace_back(out.all.image_shape,
                                std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(i * n),
                                                    flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * n)));
  }
  return out;
}

}  // namespace latadv
