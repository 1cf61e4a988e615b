#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "wdis/datasets.hpp"
#include "wdis/factors.hpp"
#include "wdis/nn.hpp"

namespace wdis {

struct ArchConfig {
  std::size_t latent_dim = 8;
  std::size_t height = 64, width = 64, channels = 1;
  std::vector<std::size_t> conv_channels{32, 64, 128, 256};
  std::size_t kernel = 4;
  std::size_t stride = 2;
  std::size_t mlp_width = 1024;
  std::size_t mlp_depth = 3;  // hidden tanh layers in the discriminator and relational learner
  std::size_t relation_code_dim = 8;
  std::size_t relation_arity = 1;

  // Throws ConfigError naming the offending field.
  void validate() const;
  std::size_t image_size() const { return height * width * channels; }
  std::size_t relational_input_size() const { return relation_arity * latent_dim + relation_code_dim; }

  bool operator==(const ArchConfig&) const = default;
};

// Reference defaults for a preset: N_z of 8 (16 for shapes3d), 64x64 images
// (3 channels for shapes3d), arity and relation code size from the builtin
// relation set.
ArchConfig default_arch(Preset preset);

// Arity and code width required by a relation set.
void fit_relations(ArchConfig& arch, std::span<const RelationDef> relations);

inline constexpr double kLeakySlope = 0.2;

// Layer stacks for the four networks. The decoder and discriminator stacks
// stop at logits; decode() and discriminate() apply the output sigmoid.
struct Architecture {
  explicit Architecture(const ArchConfig& config);

  ArchConfig config;
  nn::Stack encoder;
  nn::Stack decoder;
  nn::Stack discriminator;
  nn::Stack relational;     // linear output
};

template <typename T>
struct NetworkParams {
  nn::ParameterSet<T> encoder;
  nn::ParameterSet<T> decoder;
  nn::ParameterSet<T> discriminator;
  nn::ParameterSet<T> relational;

  bool all_finite() const {
    return encoder.all_finite() && decoder.all_finite() && discriminator.all_finite() && relational.all_finite();
  }

  template <typename U>
  NetworkParams<U> cast() const {
    return {encoder.template cast<U>(), decoder.template cast<U>(), discriminator.template cast<U>(),
            relational.template cast<U>()};
  }

  bool operator==(const NetworkParams&) const = default;
};

template <typename T>
NetworkParams<T> init_params(const Architecture& arch, std::uint64_t seed);

// Rows are flattened (H, W, C) images.
template <typename T>
nn::Matrix<T> encode(const Architecture& arch, const NetworkParams<T>& params, const nn::Matrix<T>& images);

template <typename T>
nn::Matrix<T> decode(const Architecture& arch, const NetworkParams<T>& params, const nn::Matrix<T>& codes);

// One probability per row.
template <typename T>
nn::Matrix<T> discriminate(const Architecture& arch, const NetworkParams<T>& params, const nn::Matrix<T>& codes);

// Batched form: each row of `inputs` is R concatenated codes, each row of
// `relation_codes` the matching relation code.
template <typename T>
nn::Matrix<T> relate(const Architecture& arch, const NetworkParams<T>& params, const nn::Matrix<T>& inputs,
                     const nn::Matrix<T>& relation_codes);

template <typename T>
nn::Vector<T> relate(const Architecture& arch, const NetworkParams<T>& params, std::span<const nn::Vector<T>> inputs,
                     const nn::Vector<T>& relation_code);

nn::Matrix<float> image_batch(const Dataset& dataset, std::span<const std::size_t> indices);

}  // namespace wdis
