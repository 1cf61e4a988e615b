#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wdis/datasets.hpp"
#include "wdis/networks.hpp"
#include "wdis/training.hpp"

namespace wdis {

struct EvalConfig {
  std::vector<double> alphas{0.0, 0.1, 0.3, 0.5, 0.7, 0.9};
  std::vector<std::size_t> depths{1, 5, 10};
  std::vector<std::size_t> taus{10, 20, 30};
  std::size_t trials = 10000;
};

struct RunConfig {
  DatasetConfig data;
  std::size_t tau = 30;
  std::string data_dir;  // empty: <out>/data
  std::string archive;   // optional external archive ingested by `generate`
  ArchiveFormat archive_format = ArchiveFormat::Native;
  std::size_t archive_max_samples = 0;
  ArchConfig arch;
  TrainConfig train;
  EvalConfig eval;
  std::uint64_t seed = 0;
  std::string out = ".";

  std::string dataset_dir() const { return data_dir.empty() ? out + "/data" : data_dir; }
  std::string checkpoint_path() const { return out + "/checkpoint.wdck"; }
  std::string history_path() const { return out + "/history.csv"; }
};

// Reference settings for a preset.
RunConfig default_run_config(Preset preset);

// Reads an INI-style file:
//   seed = 1
//   preset = dsprites
//   [data]  samples_per_combination, image_size, noise, noise_level, tau, dir,
//           archive, archive_format, max_samples
//   [arch]  latent_dim, conv_channels, kernel, stride, mlp_width, mlp_depth
//   [train] beta, gamma, warmup_epochs, full_epochs, batch_absae, batch_rel,
//           learning_rate, refresh_every, checkpoint_every, variance_floor
//   [eval]  alphas, depths, taus, trials
// Unknown keys and malformed values raise ConfigError.
struct ConfigOverrides {
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

RunConfig load_run_config(const std::string& path, const ConfigOverrides& overrides = {});
RunConfig parse_run_config(const std::string& text, const ConfigOverrides& overrides = {});

// Propagates the seed and the dataset geometry into the sub-configs.
void finalize(RunConfig& config);

// Stable text rendering of every setting, used for the config digest.
std::string canonical_text(const RunConfig& config);

}  // namespace wdis
