#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "wdis/rng.hpp"

namespace wdis {

inline constexpr double kVarianceFloor = 1e-4;

// Equal-weight mixture of N diagonal Gaussians over an N_z-dimensional space.
struct GMPrior {
  Eigen::MatrixXd means;      // N x N_z
  Eigen::MatrixXd variances;  // N x N_z, each >= the estimation floor
  double variance_floor = kVarianceFloor;
  std::vector<std::size_t> support;  // codes used per component

  std::size_t num_components() const { return static_cast<std::size_t>(means.rows()); }
  std::size_t latent_dim() const { return static_cast<std::size_t>(means.cols()); }
};

struct ClassificationResult {
  bool accepted = false;
  std::optional<std::size_t> component;
  double responsibility = 0.0;
};

// One N_z-row matrix of codes per component.
GMPrior estimate_prior(std::span<const Eigen::MatrixXd> codes_by_combination, double variance_floor = kVarianceFloor);

// Codes as rows with one component label per row.
GMPrior estimate_prior(const Eigen::MatrixXd& codes, std::span<const std::size_t> labels, std::size_t num_components,
                       double variance_floor = kVarianceFloor);

Eigen::VectorXd log_component_densities(const GMPrior& prior, const Eigen::VectorXd& z);
double mixture_log_density(const GMPrior& prior, const Eigen::VectorXd& z);
Eigen::VectorXd responsibilities(const GMPrior& prior, const Eigen::VectorXd& z);
ClassificationResult classify(const GMPrior& prior, const Eigen::VectorXd& z, double alpha);

// Row-wise variants: one row of output per row of codes.
Eigen::MatrixXd log_component_densities_rows(const GMPrior& prior, const Eigen::MatrixXd& codes);
Eigen::MatrixXd responsibilities_rows(const GMPrior& prior, const Eigen::MatrixXd& codes);

// n x N_z draws from component i.
Eigen::MatrixXd sample_component(const GMPrior& prior, std::size_t i, std::size_t n, std::uint64_t seed);
// n x N_z draws from Uniform(-1, 1).
Eigen::MatrixXd warmup_sample(std::size_t n, std::size_t latent_dim, std::uint64_t seed);

// Single draws from a caller-owned generator.
Eigen::VectorXd sample_component(const GMPrior& prior, std::size_t i, Rng& rng);
Eigen::VectorXd warmup_sample(std::size_t latent_dim, Rng& rng);

}  // namespace wdis
