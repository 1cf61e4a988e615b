#include "wdis/datasets.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <functional>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "archive_readers.hpp"
#include "wdis/error.hpp"
#include "wdis/rng.hpp"

namespace wdis {

namespace {

constexpr int kSupersample = 4;
constexpr std::array<char, 4> kImagesMagic = {'W', 'D', 'I', 'S'};
constexpr std::uint32_t kImagesVersion = 1;

// Stream tags for derive_rng.
enum : std::uint64_t { kStreamNuisance = 1, kStreamNoise = 2, kStreamSplit = 3, kStreamSubset = 4 };

struct Point {
  double x;
  double y;
};
using Stroke = std::vector<Point>;

// Coverage rasterizer: evaluates `inside` on a kSupersample^2 grid per pixel.
template <typename Inside>
std::vector<float> rasterize(std::size_t size, Inside inside) {
  std::vector<float> out(size * size, 0.0f);
  const double step = 1.0 / kSupersample;
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSupersample; ++sy)
        for (int sx = 0; sx < kSupersample; ++sx)
          hits += inside(static_cast<double>(x) + (sx + 0.5) * step, static_cast<double>(y) + (sy + 0.5) * step);
      out[y * size + x] = static_cast<float>(hits) / (kSupersample * kSupersample);
    }
  }
  return out;
}

Stroke ellipse_stroke(double cx, double cy, double rx, double ry, int segments = 24) {
  Stroke s;
  for (int i = 0; i <= segments; ++i) {
    const double t = 2.0 * std::numbers::pi * i / segments;
    s.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
  }
  return s;
}

std::vector<Stroke> glyph_strokes(std::string_view symbol) {
  if (symbol == "0") return {ellipse_stroke(0.5, 0.5, 0.21, 0.33)};
  if (symbol == "1") return {{{0.37, 0.29}, {0.52, 0.15}, {0.52, 0.85}}};
  if (symbol == "2")
    return {{{0.28, 0.3}, {0.35, 0.18}, {0.5, 0.15}, {0.65, 0.18}, {0.72, 0.3}, {0.68, 0.42}, {0.28, 0.85},
             {0.74, 0.85}}};
  if (symbol == "3")
    return {{{0.28, 0.18}, {0.7, 0.18}, {0.48, 0.45}, {0.68, 0.55}, {0.7, 0.72}, {0.55, 0.85}, {0.3, 0.82}}};
  if (symbol == "4") return {{{0.62, 0.85}, {0.62, 0.15}, {0.25, 0.62}, {0.76, 0.62}}};
  if (symbol == "5")
    return {{{0.72, 0.15}, {0.32, 0.15}, {0.3, 0.45}, {0.55, 0.42}, {0.7, 0.55}, {0.7, 0.72}, {0.55, 0.85},
             {0.28, 0.82}}};
  if (symbol == "6")
    return {{{0.68, 0.18}, {0.45, 0.2}, {0.3, 0.45}, {0.3, 0.7}, {0.45, 0.85}, {0.62, 0.82}, {0.7, 0.66},
             {0.6, 0.52}, {0.42, 0.52}, {0.3, 0.6}}};
  if (symbol == "7") return {{{0.27, 0.15}, {0.73, 0.15}, {0.42, 0.85}}};
  if (symbol == "8") return {ellipse_stroke(0.5, 0.32, 0.16, 0.16), ellipse_stroke(0.5, 0.67, 0.2, 0.18)};
  if (symbol == "9") return {ellipse_stroke(0.5, 0.34, 0.18, 0.18), {{0.68, 0.34}, {0.62, 0.85}}};
  if (symbol == "+") return {{{0.2, 0.5}, {0.8, 0.5}}, {{0.5, 0.2}, {0.5, 0.8}}};
  if (symbol == "-") return {{{0.2, 0.5}, {0.8, 0.5}}};
  if (symbol == "*") return {{{0.27, 0.27}, {0.73, 0.73}}, {{0.73, 0.27}, {0.27, 0.73}}};
  throw ConfigError("unknown glyph symbol '" + std::string(symbol) + "'");
}

double segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
  return std::sqrt(ex * ex + ey * ey);
}

std::array<float, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double m = v - c;
  return {static_cast<float>(r + m), static_cast<float>(g + m), static_cast<float>(b + m)};
}

std::size_t digit_of(const FactorSpace& space, const FactorCombination& combo, std::string_view factor) {
  const auto k = space.factor_position(factor);
  if (!k) throw ConfigError("factor space has no '" + std::string(factor) + "' factor");
  const auto v = space.factor(*k).value_index(combo.values.at(*k));
  if (!v) throw ConfigError("unknown value '" + combo.values.at(*k) + "' for factor '" + std::string(factor) + "'");
  return *v;
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

double parse_double(std::string_view text) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw DataError("malformed number '" + std::string(text) + "' in labels.csv");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string field; std::getline(ss, field, ',');) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

Dataset load_native(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  if (!fs::exists(root / "images.bin")) throw DataError("no images.bin under '" + dir + "'");
  if (!fs::exists(root / "factors.txt")) throw DataError("no factors.txt under '" + dir + "'");
  auto spec = read_spec_file((root / "factors.txt").string());
  Dataset ds{std::move(spec.space), {}, {}, {}, {}};

  std::ifstream in(root / "images.bin", std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 24 || !std::equal(kImagesMagic.begin(), kImagesMagic.end(), bytes.begin()))
    throw DataError("malformed header in images.bin");
  const std::uint32_t version = get_u32(&bytes[4]);
  if (version != kImagesVersion) throw DataError("malformed header: unsupported images.bin version " + std::to_string(version));
  const std::uint64_t count = get_u32(&bytes[8]), h = get_u32(&bytes[12]), w = get_u32(&bytes[16]),
                      c = get_u32(&bytes[20]);
  if (h == 0 || w == 0 || c == 0) throw DataError("malformed header: zero image dimension");
  const std::uint64_t per = h * w * c;
  if (bytes.size() != 24 + count * per)
    throw DataError("malformed header: images.bin holds " + std::to_string(bytes.size() - 24) +
                    " pixel bytes, header declares " + std::to_string(count * per));

  ds.samples.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto& s = ds.samples[i];
    s.height = h, s.width = w, s.channels = c;
    s.pixels.resize(per);
    const unsigned char* src = &bytes[24 + i * per];
    for (std::uint64_t p = 0; p < per; ++p) s.pixels[p] = static_cast<float>(src[p]) / 255.0f;
  }

  std::ifstream labels(root / "labels.csv");
  if (!labels) throw DataError("no labels.csv under '" + dir + "'");
  std::string line;
  std::getline(labels, line);
  const auto header = split_csv(line);
  const auto nuisances = ds.space.nuisance_factors();
  const std::size_t k_count = ds.space.num_factors();
  if (header.size() != 2 + k_count + nuisances.size() || header.front() != "sample_index" || header.back() != "split")
    throw DataError("malformed header in labels.csv");
  for (std::size_t k = 0; k < k_count; ++k)
    if (header[1 + k] != ds.space.factor(k).name)
      throw DataError("labels.csv column '" + header[1 + k] + "' does not match factor '" + ds.space.factor(k).name + "'");

  std::size_t row = 0;
  while (std::getline(labels, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != header.size()) throw DataError("labels.csv row " + std::to_string(row) + " has wrong field count");
    if (row >= count || fields[0] != std::to_string(row))
      throw DataError("labels.csv row " + std::to_string(row) + " out of sequence");
    auto& s = ds.samples[row];
    std::vector<std::string> values(fields.begin() + 1, fields.begin() + 1 + static_cast<long>(k_count));
    const bool unlabeled = std::all_of(values.begin(), values.end(), [](const auto& v) { return v.empty(); });
    if (!unlabeled) {
      FactorCombination combo{values, 0};
      try {
        s.combination_index = combination_to_index(ds.space, combo);
      } catch (const ConfigError& e) {
        throw DataError(std::string("labels.csv: ") + e.what());
      }
    }
    for (std::size_t n = 0; n < nuisances.size(); ++n) s.nuisance.push_back(parse_double(fields[1 + k_count + n]));
    const auto& split = fields.back();
    if (split == "train") ds.train.push_back(row);
    else if (split == "validation") ds.validation.push_back(row);
    else if (split == "test") ds.test.push_back(row);
    else throw DataError("unknown split '" + split + "' in labels.csv");
    ++row;
  }
  if (row != count) throw DataError("labels.csv has " + std::to_string(row) + " rows, images.bin has " + std::to_string(count));
  return ds;
}

}  // namespace

std::string_view split_name(SplitKind split) {
  switch (split) {
    case SplitKind::Train: return "train";
    case SplitKind::Validation: return "validation";
    case SplitKind::Test: return "test";
  }
  return "train";
}

SplitKind Dataset::split_of(std::size_t sample) const {
  if (std::binary_search(test.begin(), test.end(), sample)) return SplitKind::Test;
  if (std::binary_search(validation.begin(), validation.end(), sample)) return SplitKind::Validation;
  return SplitKind::Train;
}

std::size_t LabeledSubset::total() const {
  std::size_t n = 0;
  for (const auto& v : per_combination) n += v.size();
  return n;
}

float quantize_pixel(float value) {
  return std::round(std::clamp(value, 0.0f, 1.0f) * 255.0f) / 255.0f;
}

ImageSample render_sprite(const FactorSpace& space, const FactorCombination& combo,
                          const SpriteNuisance& nuisance, std::size_t size) {
  if (size < 3) throw ConfigError("sprite images need at least 3 pixels per side");
  if (nuisance.scale <= 0.0 || nuisance.scale > 1.0) throw ConfigError("sprite scale must lie in (0, 1]");
  const std::size_t col = digit_of(space, combo, "x_position");
  const std::size_t row = digit_of(space, combo, "y_position");
  const std::size_t shape = digit_of(space, combo, "shape");
  const std::string& shape_name = space.factor(*space.factor_position("shape")).values[shape];

  const double cell = static_cast<double>(size) / 3.0;
  const double cx = (col + 0.5) * cell, cy = (row + 0.5) * cell;
  const double r = cell * 0.5 * 0.9 * nuisance.scale;
  const double cs = std::cos(nuisance.orientation), sn = std::sin(nuisance.orientation);

  std::function<bool(double, double)> shape_fn;
  if (shape_name == "ellipse") {
    shape_fn = [](double u, double v) { return u * u + (v / 0.55) * (v / 0.55) <= 1.0; };
  } else if (shape_name == "square") {
    shape_fn = [](double u, double v) { return std::max(std::abs(u), std::abs(v)) <= 0.72; };
  } else if (shape_name == "heart") {
    shape_fn = [](double u, double v) {
      const double x = 1.15 * u, y = -1.15 * v + 0.12;
      const double a = x * x + y * y - 1.0;
      return a * a * a - x * x * y * y * y <= 0.0;
    };
  } else {
    throw ConfigError("unknown sprite shape '" + shape_name + "'");
  }

  ImageSample img;
  img.height = img.width = size;
  img.channels = 1;
  img.combination_index = combo.index;
  img.nuisance = {nuisance.scale, nuisance.orientation};
  img.pixels = rasterize(size, [&](double px, double py) {
    const double dx = px - cx, dy = py - cy;
    const double u = (cs * dx + sn * dy) / r, v = (-sn * dx + cs * dy) / r;
    return shape_fn(u, v);
  });
  return img;
}

ImageSample render_glyph(std::string_view symbol, const GlyphNuisance& nuisance, std::size_t size) {
  auto strokes = glyph_strokes(symbol);
  if (nuisance.thickness <= 0.0) throw ConfigError("glyph thickness must be positive");
  if (nuisance.seed != 0) {
    // Seed 0 is the canonical glyph; any other seed applies a small random
    // similarity transform plus per-point wobble.
    Rng rng = derive_rng(nuisance.seed, {0x61797068});
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    const double angle = 0.12 * uni(rng), scale = 1.0 + 0.1 * uni(rng);
    const double tx = 0.04 * uni(rng), ty = 0.04 * uni(rng);
    const double c = std::cos(angle), s = std::sin(angle);
    for (auto& stroke : strokes) {
      for (auto& p : stroke) {
        const double x = p.x - 0.5, y = p.y - 0.5;
        p = {0.5 + tx + scale * (c * x - s * y) + 0.015 * uni(rng), 0.5 + ty + scale * (s * x + c * y) + 0.015 * uni(rng)};
      }
    }
  }
  const double half_width = 0.045 * nuisance.thickness * static_cast<double>(size);
  const double scale = static_cast<double>(size);
  for (auto& stroke : strokes)
    for (auto& p : stroke) p = {p.x * scale, p.y * scale};

  ImageSample img;
  img.height = img.width = size;
  img.channels = 1;
  img.nuisance = {static_cast<double>(nuisance.seed), nuisance.thickness};
  img.pixels = rasterize(size, [&](double px, double py) {
    for (const auto& stroke : strokes)
      for (std::size_t i = 0; i + 1 < stroke.size(); ++i)
        if (segment_distance({px, py}, stroke[i], stroke[i + 1]) <= half_width) return true;
    return false;
  });
  return img;
}

ImageSample render_object(const FactorSpace& space, const FactorCombination& combo,
                          const ObjectNuisance& nuisance, std::size_t size) {
  const std::size_t hue = digit_of(space, combo, "object_color");
  const std::size_t shape = digit_of(space, combo, "shape");
  const std::size_t scale = digit_of(space, combo, "scale");
  const auto& color_values = space.factor(*space.factor_position("object_color")).values;
  const auto& shape_name = space.factor(*space.factor_position("shape")).values[shape];

  const double s = static_cast<double>(size);
  const double horizon = 0.62 * s;
  const double radius = s * (0.11 + 0.04 * static_cast<double>(scale));
  const double cx = 0.5 * s, cy = horizon + 0.02 * s - radius * 0.4;
  const double cs = std::cos(nuisance.orientation), sn = std::sin(nuisance.orientation);

  std::function<bool(double, double)> inside;
  if (shape_name == "cube") inside = [](double u, double v) { return std::max(std::abs(u), std::abs(v)) <= 0.85; };
  else if (shape_name == "cylinder") inside = [](double u, double v) {
    return (std::abs(u) <= 0.7 && std::abs(v) <= 0.8) || (u * u / 0.49 + (v + 0.8) * (v + 0.8) / 0.04 <= 1.0) ||
           (u * u / 0.49 + (v - 0.8) * (v - 0.8) / 0.04 <= 1.0);
  };
  else if (shape_name == "sphere") inside = [](double u, double v) { return u * u + v * v <= 1.0; };
  else if (shape_name == "ellipsoid") inside = [](double u, double v) { return u * u / 1.3 + v * v / 0.45 <= 1.0; };
  else throw ConfigError("unknown object shape '" + shape_name + "'");

  const auto object_rgb = hsv_to_rgb(static_cast<double>(hue) / static_cast<double>(color_values.size()), 0.85, 0.95);
  const auto wall_rgb = hsv_to_rgb(nuisance.background_hue, 0.55, 0.85);
  const auto floor_rgb = hsv_to_rgb(nuisance.floor_hue, 0.55, 0.7);

  ImageSample img;
  img.height = img.width = size;
  img.channels = 3;
  img.combination_index = combo.index;
  img.nuisance = {nuisance.floor_hue, nuisance.background_hue, nuisance.orientation};
  img.pixels.assign(size * size * 3, 0.0f);
  const double step = 1.0 / kSupersample;
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      std::array<double, 3> acc{};
      for (int sy = 0; sy < kSupersample; ++sy) {
        for (int sx = 0; sx < kSupersample; ++sx) {
          const double px = static_cast<double>(x) + (sx + 0.5) * step, py = static_cast<double>(y) + (sy + 0.5) * step;
          const double dx = px - cx, dy = py - cy;
          const double u = (cs * dx + sn * dy) / radius, v = (-sn * dx + cs * dy) / radius;
          std::array<float, 3> rgb = py < horizon ? wall_rgb : floor_rgb;
          if (inside(u, v)) {
            const double shade = 0.8 + 0.2 * std::clamp(-v, -1.0, 1.0);
            for (int ch = 0; ch < 3; ++ch) rgb[ch] = static_cast<float>(object_rgb[ch] * shade);
          }
          for (int ch = 0; ch < 3; ++ch) acc[ch] += rgb[ch];
        }
      }
      for (int ch = 0; ch < 3; ++ch)
        img.pixels[(y * size + x) * 3 + ch] =
            std::clamp(static_cast<float>(acc[ch] / (kSupersample * kSupersample)), 0.0f, 1.0f);
    }
  }
  return img;
}

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "bernoulli") return NoiseKind::Bernoulli;
  if (name == "gaussian") return NoiseKind::Gaussian;
  throw ConfigError("unknown noise kind '" + std::string(name) + "'");
}

std::string_view noise_kind_name(NoiseKind kind) { return kind == NoiseKind::Bernoulli ? "bernoulli" : "gaussian"; }

ImageSample augment(const ImageSample& image, NoiseKind kind, double level, std::uint64_t seed) {
  if (!(level >= 0.0)) throw ConfigError("noise level must be non-negative");
  ImageSample out = image;
  if (level == 0.0) return out;
  Rng rng = derive_rng(seed, {kStreamNoise});
  if (kind == NoiseKind::Bernoulli) {
    std::uniform_real_distribution<float> uni(0.0f, 1.0f);
    for (auto& p : out.pixels) {
      const float flip = uni(rng);
      const float value = uni(rng);
      if (flip < level) p = value;
    }
  } else {
    std::normal_distribution<double> noise(0.0, level);
    for (auto& p : out.pixels) p = static_cast<float>(std::clamp(p + noise(rng), 0.0, 1.0));
  }
  return out;
}

Dataset make_dataset(const FactorSpace& space, const DatasetConfig& config) {
  if (config.samples_per_combination < 1) throw ConfigError("samples_per_combination must be at least 1");
  if (config.image_size < 8) throw ConfigError("image_size must be at least 8");
  if (config.preset == Preset::Custom) throw ConfigError("no procedural renderer for the custom preset");
  Dataset ds{space, {}, {}, {}, {}};
  const std::size_t n = space.num_combinations();
  ds.samples.reserve(n * config.samples_per_combination);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (std::size_t c = 0; c < n; ++c) {
    const auto combo = index_to_combination(space, c);
    for (std::size_t s = 0; s < config.samples_per_combination; ++s) {
      Rng rng = derive_rng(config.seed, {kStreamNuisance, c, s});
      ImageSample img;
      switch (config.preset) {
        case Preset::Dsprites: {
          SpriteNuisance nz;
          nz.scale = kSpriteScaleMin + (1.0 - kSpriteScaleMin) * uni(rng);
          nz.orientation = 2.0 * std::numbers::pi * uni(rng);
          img = render_sprite(space, combo, nz, config.image_size);
          break;
        }
        case Preset::HwfLike: {
          GlyphNuisance nz;
          nz.seed = 1 + rng() % 0xfffffffeULL;
          nz.thickness = kGlyphThicknessMin + (kGlyphThicknessMax - kGlyphThicknessMin) * uni(rng);
          img = render_glyph(combo.values[0], nz, config.image_size);
          img.combination_index = c;
          break;
        }
        case Preset::Shapes3d: {
          ObjectNuisance nz;
          nz.floor_hue = static_cast<double>(rng() % 10) / 10.0;
          nz.background_hue = static_cast<double>(rng() % 10) / 10.0;
          nz.orientation = (uni(rng) * 2.0 - 1.0) * std::numbers::pi / 6.0;
          img = render_object(space, combo, nz, config.image_size);
          break;
        }
        case Preset::Custom: break;
      }
      img = augment(img, config.noise.kind, config.noise.level, derive_rng(config.seed, {kStreamNoise, c, s})());
      for (auto& p : img.pixels) p = quantize_pixel(p);
      ds.samples.push_back(std::move(img));
    }
  }
  assign_splits(ds, config.seed);
  return ds;
}

void assign_splits(Dataset& dataset, std::uint64_t seed) {
  const std::size_t n = dataset.space.num_combinations();
  std::vector<std::vector<std::size_t>> groups(n + 1);
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& c = dataset.samples[i].combination_index;
    groups[c ? *c : n].push_back(i);
  }
  dataset.train.clear(), dataset.validation.clear(), dataset.test.clear();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto& members = groups[g];
    Rng rng = derive_rng(seed, {kStreamSplit, g});
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t total = members.size();
    std::size_t n_test = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(total)));
    if (total >= 3) n_test = std::max<std::size_t>(n_test, 1);
    const std::size_t rest = total - n_test;
    std::size_t n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(rest)));
    if (total >= 3) n_val = std::max<std::size_t>(n_val, 1);
    for (std::size_t i = 0; i < total; ++i) {
      if (i < n_test) dataset.test.push_back(members[i]);
      else if (i < n_test + n_val) dataset.validation.push_back(members[i]);
      else dataset.train.push_back(members[i]);
    }
  }
  std::sort(dataset.train.begin(), dataset.train.end());
  std::sort(dataset.validation.begin(), dataset.validation.end());
  std::sort(dataset.test.begin(), dataset.test.end());
}

LabeledSubset label_subset(const Dataset& dataset, std::size_t tau, std::uint64_t seed) {
  if (tau == 0) throw ConfigError("tau must be at least 1");
  const std::size_t n = dataset.space.num_combinations();
  std::vector<std::vector<std::size_t>> by_combo(n);
  for (auto i : dataset.train)
    if (const auto& c = dataset.samples[i].combination_index) by_combo[*c].push_back(i);
  LabeledSubset subset{tau, {}};
  for (std::size_t c = 0; c < n; ++c) {
    auto& pool = by_combo[c];
    if (pool.size() < tau)
      throw DataError("combination " + std::to_string(c) + " has " + std::to_string(pool.size()) +
                      " training samples, fewer than tau=" + std::to_string(tau));
    Rng rng = derive_rng(seed, {kStreamSubset, c});
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(tau);
    subset.per_combination.push_back(std::move(pool));
  }
  return subset;
}

ArchiveFormat parse_archive_format(std::string_view name) {
  if (name == "native") return ArchiveFormat::Native;
  if (name == "dsprites-official") return ArchiveFormat::DspritesOfficial;
  if (name == "shapes3d-official") return ArchiveFormat::Shapes3dOfficial;
  if (name == "hwf-official") return ArchiveFormat::HwfOfficial;
  throw ConfigError("unknown archive format '" + std::string(name) + "'");
}

void save_native(const Dataset& dataset, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path root(dir);
  std::ofstream images(root / "images.bin", std::ios::binary);
  if (!images) throw DataError("cannot write '" + (root / "images.bin").string() + "'");
  images.write(kImagesMagic.data(), 4);
  put_u32(images, kImagesVersion);
  put_u32(images, static_cast<std::uint32_t>(dataset.samples.size()));
  put_u32(images, static_cast<std::uint32_t>(dataset.height()));
  put_u32(images, static_cast<std::uint32_t>(dataset.width()));
  put_u32(images, static_cast<std::uint32_t>(dataset.channels()));
  std::vector<char> buffer;
  for (const auto& s : dataset.samples) {
    if (s.height != dataset.height() || s.width != dataset.width() || s.channels != dataset.channels())
      throw DataError("dataset mixes image shapes");
    buffer.resize(s.pixels.size());
    for (std::size_t p = 0; p < s.pixels.size(); ++p)
      buffer[p] = static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(s.pixels[p], 0.0f, 1.0f) * 255.0f)));
    images.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
  }
  if (!images) throw DataError("failed writing images.bin");

  std::ofstream labels(root / "labels.csv");
  if (!labels) throw DataError("cannot write labels.csv");
  labels << "sample_index";
  for (std::size_t k = 0; k < dataset.space.num_factors(); ++k) labels << ',' << dataset.space.factor(k).name;
  const auto nuisances = dataset.space.nuisance_factors();
  for (const auto* f : nuisances) labels << ',' << f->name;
  labels << ",split\n";
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& s = dataset.samples[i];
    labels << i;
    if (s.combination_index) {
      for (const auto& v : index_to_combination(dataset.space, *s.combination_index).values) labels << ',' << v;
    } else {
      for (std::size_t k = 0; k < dataset.space.num_factors(); ++k) labels << ',';
    }
    for (std::size_t n = 0; n < nuisances.size(); ++n)
      labels << ',' << (n < s.nuisance.size() ? format_double(s.nuisance[n]) : "0");
    labels << ',' << split_name(dataset.split_of(i)) << '\n';
  }

  std::vector<RelationDef> relations;
  if (dataset.space.preset() != Preset::Custom) relations = builtin_relations(dataset.space, dataset.space.preset());
  write_spec_file((root / "factors.txt").string(), dataset.space, relations);
}

Dataset load_archive(const std::string& path, ArchiveFormat format, const ArchiveOptions& options) {
  switch (format) {
    case ArchiveFormat::Native: return load_native(path);
    case ArchiveFormat::DspritesOfficial: return archives::load_dsprites_npz(path, options);
    case ArchiveFormat::Shapes3dOfficial: return archives::load_shapes3d_h5(path, options);
    case ArchiveFormat::HwfOfficial: return archives::load_hwf_json(path, options);
  }
  throw ConfigError("unknown archive format");
}

}  // namespace wdis
