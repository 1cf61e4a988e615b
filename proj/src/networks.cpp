#include "wdis/networks.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "wdis/error.hpp"

namespace wdis {

void ArchConfig::validate() const {
  if (latent_dim < 1) throw ConfigError("arch.latent_dim must be at least 1");
  if (height == 0 || width == 0 || channels == 0) throw ConfigError("arch image shape must be non-empty");
  if (conv_channels.empty()) throw ConfigError("arch.conv_channels must list at least one layer");
  if (stride < 1 || kernel < stride || (kernel - stride) % 2 != 0)
    throw ConfigError("arch.kernel - arch.stride must be a non-negative even number");
  std::size_t scale = 1;
  for (std::size_t i = 0; i < conv_channels.size(); ++i) {
    if (conv_channels[i] == 0) throw ConfigError("arch.conv_channels entries must be positive");
    scale *= stride;
  }
  if (height % scale != 0 || width % scale != 0)
    throw ConfigError("image size " + std::to_string(height) + "x" + std::to_string(width) + " is not divisible by " +
                      std::to_string(scale) + " (stride^layers)");
  if (mlp_width == 0) throw ConfigError("arch.mlp_width must be positive");
  if (relation_arity < 1) throw ConfigError("arch.relation_arity must be at least 1");
}

ArchConfig default_arch(Preset preset) {
  ArchConfig arch;
  if (preset == Preset::Shapes3d) {
    arch.latent_dim = 16;
    arch.channels = 3;
  }
  if (preset != Preset::Custom) {
    const auto space = build_factor_space(preset);
    const auto relations = builtin_relations(space, preset);
    fit_relations(arch, relations);
  }
  return arch;
}

void fit_relations(ArchConfig& arch, std::span<const RelationDef> relations) {
  if (relations.empty()) {
    arch.relation_arity = 1;
    arch.relation_code_dim = arch.latent_dim;
    return;
  }
  const std::size_t arity = relations.front().arity;
  for (const auto& r : relations)
    if (r.arity != arity) throw ConfigError("relations of mixed arity cannot share one relational learner");
  arch.relation_arity = arity;
  arch.relation_code_dim = std::max(relations.size(), arch.latent_dim);
}

Architecture::Architecture(const ArchConfig& cfg)
    : config(cfg),
      encoder(cfg.image_size()),
      decoder(cfg.latent_dim),
      discriminator(cfg.latent_dim),
      relational(cfg.relational_input_size()) {
  cfg.validate();
  const auto& ch = cfg.conv_channels;
  std::size_t h = cfg.height, w = cfg.width, c = cfg.channels;
  for (std::size_t i = 0; i < ch.size(); ++i) {
    encoder.conv("encoder/conv" + std::to_string(i), h, w, c, ch[i], cfg.kernel, cfg.stride)
        .activation(nn::Activation::LeakyRelu, kLeakySlope);
    h /= cfg.stride, w /= cfg.stride, c = ch[i];
  }
  encoder.dense("encoder/head", cfg.latent_dim);

  decoder.dense("decoder/head", h * w * c).activation(nn::Activation::LeakyRelu, kLeakySlope);
  for (std::size_t i = ch.size(); i-- > 0;) {
    const std::size_t out_c = i > 0 ? ch[i - 1] : cfg.channels;
    decoder.conv_transpose("decoder/deconv" + std::to_string(ch.size() - 1 - i), h, w, c, out_c, cfg.kernel,
                           cfg.stride);
    if (i > 0) decoder.activation(nn::Activation::LeakyRelu, kLeakySlope);
    h *= cfg.stride, w *= cfg.stride, c = out_c;
  }

  for (std::size_t i = 0; i < cfg.mlp_depth; ++i)
    discriminator.dense("discriminator/fc" + std::to_string(i), cfg.mlp_width).activation(nn::Activation::Tanh);
  discriminator.dense("discriminator/out", 1);

  for (std::size_t i = 0; i < cfg.mlp_depth; ++i)
    relational.dense("relational/fc" + std::to_string(i), cfg.mlp_width).activation(nn::Activation::Tanh);
  relational.dense("relational/out", cfg.latent_dim);
}

template <typename T>
NetworkParams<T> init_params(const Architecture& arch, std::uint64_t seed) {
  NetworkParams<T> p{nn::make_parameters<T>(arch.encoder), nn::make_parameters<T>(arch.decoder),
                     nn::make_parameters<T>(arch.discriminator), nn::make_parameters<T>(arch.relational)};
  auto rng = derive_rng(seed, {0x1417, 0});
  nn::initialize(arch.encoder, p.encoder, rng);
  rng = derive_rng(seed, {0x1417, 1});
  nn::initialize(arch.decoder, p.decoder, rng);
  rng = derive_rng(seed, {0x1417, 2});
  nn::initialize(arch.discriminator, p.discriminator, rng);
  rng = derive_rng(seed, {0x1417, 3});
  nn::initialize(arch.relational, p.relational, rng);
  return p;
}

namespace {

template <typename T>
nn::Matrix<T> sigmoid(const nn::Matrix<T>& logits) {
  return logits.unaryExpr([](T v) {
    return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  });
}

void check_width(std::size_t got, std::size_t want, const char* what) {
  if (got != want)
    throw std::invalid_argument(std::string(what) + " has width " + std::to_string(got) + ", expected " +
                                std::to_string(want));
}

}  // namespace

template <typename T>
nn::Matrix<T> encode(const Architecture& arch, const NetworkParams<T>& params, const nn::Matrix<T>& images) {
  check_width(static_cast<std::size_t>(images.cols()), arch.config.image_size(), "image batch");
  return nn::forward(arch.encoder, params.encoder, images);
}

template <typename T>
nn::Matrix<T> decode(const Architecture& arch, const NetworkParams<T>& params, const nn::Matrix<T>& codes) {
  check_width(static_cast<std::size_t>(codes.cols()), arch.config.latent_dim, "code batch");
  return sigmoid<T>(nn::forward(arch.decoder, params.decoder, codes));
}

template <typename T>
nn::Matrix<T> discriminate(const Architecture& arch, const NetworkParams<T>& params, const nn::Matrix<T>& codes) {
  check_width(static_cast<std::size_t>(codes.cols()), arch.config.latent_dim, "code batch");
  // Saturated logits are kept strictly inside (0, 1).
  const T lo = static_cast<T>(1e-6), hi = T(1) - lo;
  return sigmoid<T>(nn::forward(arch.discriminator, params.discriminator, codes)).cwiseMax(lo).cwiseMin(hi);
}

template <typename T>
nn::Matrix<T> relate(const Architecture& arch, const NetworkParams<T>& params, const nn::Matrix<T>& inputs,
                     const nn::Matrix<T>& relation_codes) {
  const auto& cfg = arch.config;
  check_width(static_cast<std::size_t>(inputs.cols()), cfg.relation_arity * cfg.latent_dim, "relation inputs");
  check_width(static_cast<std::size_t>(relation_codes.cols()), cfg.relation_code_dim, "relation code");
  if (inputs.rows() != relation_codes.rows()) throw std::invalid_argument("relation inputs and codes differ in rows");
  nn::Matrix<T> x(inputs.rows(), inputs.cols() + relation_codes.cols());
  x << inputs, relation_codes;
  return nn::forward(arch.relational, params.relational, x);
}

template <typename T>
nn::Vector<T> relate(const Architecture& arch, const NetworkParams<T>& params, std::span<const nn::Vector<T>> inputs,
                     const nn::Vector<T>& relation_code) {
  const auto& cfg = arch.config;
  if (inputs.size() != cfg.relation_arity)
    throw std::invalid_argument("relation arity " + std::to_string(inputs.size()) + " does not match network arity " +
                                std::to_string(cfg.relation_arity));
  nn::Matrix<T> in(1, static_cast<Eigen::Index>(cfg.relation_arity * cfg.latent_dim));
  for (std::size_t r = 0; r < inputs.size(); ++r) {
    check_width(static_cast<std::size_t>(inputs[r].size()), cfg.latent_dim, "input code");
    in.block(0, static_cast<Eigen::Index>(r * cfg.latent_dim), 1, static_cast<Eigen::Index>(cfg.latent_dim)) =
        inputs[r].transpose();
  }
  nn::Matrix<T> code = relation_code.transpose();
  return relate(arch, params, in, code).row(0).transpose();
}

nn::Matrix<float> image_batch(const Dataset& dataset, std::span<const std::size_t> indices) {
  const std::size_t width = dataset.height() * dataset.width() * dataset.channels();
  nn::Matrix<float> out(static_cast<Eigen::Index>(indices.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto& px = dataset.samples.at(indices[r]).pixels;
    if (px.size() != width) throw DataError("sample " + std::to_string(indices[r]) + " has a different shape");
    std::copy(px.begin(), px.end(), out.row(static_cast<Eigen::Index>(r)).data());
  }
  return out;
}

#define WDIS_NETWORKS_INSTANTIATE(T)                                                                        \
  template NetworkParams<T> init_params<T>(const Architecture&, std::uint64_t);                             \
  template nn::Matrix<T> encode<T>(const Architecture&, const NetworkParams<T>&, const nn::Matrix<T>&);     \
  template nn::Matrix<T> decode<T>(const Architecture&, const NetworkParams<T>&, const nn::Matrix<T>&);     \
  template nn::Matrix<T> discriminate<T>(const Architecture&, const NetworkParams<T>&, const nn::Matrix<T>&); \
  template nn::Matrix<T> relate<T>(const Architecture&, const NetworkParams<T>&, const nn::Matrix<T>&,      \
                                   const nn::Matrix<T>&);                                                   \
  template nn::Vector<T> relate<T>(const Architecture&, const NetworkParams<T>&,                            \
                                   std::span<const nn::Vector<T>>, const nn::Vector<T>&);

WDIS_NETWORKS_INSTANTIATE(float)
WDIS_NETWORKS_INSTANTIATE(double)

#undef WDIS_NETWORKS_INSTANTIATE

}  // namespace wdis
