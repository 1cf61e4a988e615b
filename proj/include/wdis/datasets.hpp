#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wdis/factors.hpp"

namespace wdis {

// Channel-last (H, W, C) intensity grid, every value in [0, 1].
struct ImageSample {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<float> pixels;
  std::optional<std::size_t> combination_index;
  // One value per nuisance factor of the dataset's space, in declaration order.
  std::vector<double> nuisance;

  float at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }
  bool operator==(const ImageSample&) const = default;
};

enum class SplitKind : std::uint8_t { Train, Validation, Test };
std::string_view split_name(SplitKind split);

struct Dataset {
  FactorSpace space;
  std::vector<ImageSample> samples;
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;

  std::size_t height() const { return samples.empty() ? 0 : samples.front().height; }
  std::size_t width() const { return samples.empty() ? 0 : samples.front().width; }
  std::size_t channels() const { return samples.empty() ? 0 : samples.front().channels; }
  SplitKind split_of(std::size_t sample) const;
};

struct LabeledSubset {
  std::size_t tau = 0;
  std::vector<std::vector<std::size_t>> per_combination;  // indices into Dataset::samples

  std::size_t total() const;
};

// Nuisance ranges used by the procedural generators.
struct SpriteNuisance {
  double scale = 1.0;        // [0.5, 1.0]
  double orientation = 0.0;  // radians, [0, 2*pi)
};

struct GlyphNuisance {
  std::uint64_t seed = 0;  // stroke jitter
  double thickness = 1.0;  // relative stroke width, [0.6, 1.6]
};

struct ObjectNuisance {
  double floor_hue = 0.0;       // [0, 1)
  double background_hue = 0.5;  // [0, 1)
  double orientation = 0.0;     // radians, [-pi/6, pi/6]
};

inline constexpr double kSpriteScaleMin = 0.5;
inline constexpr double kGlyphThicknessMin = 0.6;
inline constexpr double kGlyphThicknessMax = 1.6;

ImageSample render_sprite(const FactorSpace& space, const FactorCombination& combo,
                          const SpriteNuisance& nuisance, std::size_t size);
ImageSample render_glyph(std::string_view symbol, const GlyphNuisance& nuisance, std::size_t size);
ImageSample render_object(const FactorSpace& space, const FactorCombination& combo,
                          const ObjectNuisance& nuisance, std::size_t size);

enum class NoiseKind { Bernoulli, Gaussian };
NoiseKind parse_noise_kind(std::string_view name);
std::string_view noise_kind_name(NoiseKind kind);

struct NoiseConfig {
  NoiseKind kind = NoiseKind::Gaussian;
  double level = 0.05;
};

ImageSample augment(const ImageSample& image, NoiseKind kind, double level, std::uint64_t seed);

struct DatasetConfig {
  Preset preset = Preset::Dsprites;
  std::size_t samples_per_combination = 50;
  std::size_t image_size = 64;
  NoiseConfig noise;
  std::uint64_t seed = 0;
};

Dataset make_dataset(const FactorSpace& space, const DatasetConfig& config);

// Stratified split: 20% of each combination's samples to test, 10% of the
// remainder to validation, everything else to train.
void assign_splits(Dataset& dataset, std::uint64_t seed);

LabeledSubset label_subset(const Dataset& dataset, std::size_t tau, std::uint64_t seed);

// Pixels are stored as bytes; this snaps a value onto the byte grid.
float quantize_pixel(float value);

enum class ArchiveFormat { Native, DspritesOfficial, Shapes3dOfficial, HwfOfficial };
ArchiveFormat parse_archive_format(std::string_view name);

struct ArchiveOptions {
  std::size_t max_samples = 0;  // 0 keeps everything; otherwise strided subsample
  std::size_t image_size = 0;   // 0 keeps the archive resolution; otherwise box/bilinear resample
  std::uint64_t seed = 0;       // split assignment for archives without splits
};

// Native layout: <dir>/images.bin, <dir>/labels.csv, <dir>/factors.txt.
void save_native(const Dataset& dataset, const std::string& dir);
Dataset load_archive(const std::string& path, ArchiveFormat format, const ArchiveOptions& options = {});

}  // namespace wdis
