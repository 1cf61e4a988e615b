#include "wdis/prior.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "wdis/error.hpp"

namespace wdis {

GMPrior estimate_prior(std::span<const Eigen::MatrixXd> codes_by_combination, double variance_floor) {
  if (codes_by_combination.empty()) throw DataError("cannot estimate a prior without components");
  if (!(variance_floor > 0)) throw ConfigError("variance floor must be positive");
  const auto n = static_cast<Eigen::Index>(codes_by_combination.size());
  const Eigen::Index dim = codes_by_combination.front().cols();
  GMPrior prior;
  prior.variance_floor = variance_floor;
  prior.means.resize(n, dim);
  prior.variances.resize(n, dim);
  prior.support.resize(codes_by_combination.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& codes = codes_by_combination[static_cast<std::size_t>(i)];
    if (codes.rows() == 0) throw DataError("component " + std::to_string(i) + " has no labeled codes");
    if (codes.cols() != dim) throw DataError("components disagree on code dimension");
    if (!codes.allFinite()) throw NumericError("non-finite code in component " + std::to_string(i));
    const Eigen::RowVectorXd mean = codes.colwise().mean();
    const double divisor = std::max<double>(static_cast<double>(codes.rows()) - 1.0, 1.0);
    const Eigen::RowVectorXd var = (codes.rowwise() - mean).array().square().colwise().sum() / divisor;
    prior.means.row(i) = mean;
    prior.variances.row(i) = var.array().max(variance_floor);
    prior.support[static_cast<std::size_t>(i)] = static_cast<std::size_t>(codes.rows());
  }
  return prior;
}

GMPrior estimate_prior(const Eigen::MatrixXd& codes, std::span<const std::size_t> labels, std::size_t num_components,
                       double variance_floor) {
  if (static_cast<std::size_t>(codes.rows()) != labels.size()) throw DataError("one label per code row is required");
  std::vector<std::vector<Eigen::Index>> rows(num_components);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] >= num_components) throw DataError("label " + std::to_string(labels[r]) + " out of range");
    rows[labels[r]].push_back(static_cast<Eigen::Index>(r));
  }
  std::vector<Eigen::MatrixXd> grouped(num_components);
  for (std::size_t i = 0; i < num_components; ++i) grouped[i] = codes(rows[i], Eigen::all);
  return estimate_prior(grouped, variance_floor);
}

Eigen::VectorXd log_component_densities(const GMPrior& prior, const Eigen::VectorXd& z) {
  if (static_cast<std::size_t>(z.size()) != prior.latent_dim())
    throw std::invalid_argument("code dimension does not match the prior");
  const double log2pi = std::log(2.0 * std::numbers::pi);
  const Eigen::Index n = prior.means.rows();
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto v = prior.variances.row(i).array();
    const auto d = z.transpose().array() - prior.means.row(i).array();
    out[i] = -0.5 * ((d.square() / v).sum() + v.log().sum() + static_cast<double>(z.size()) * log2pi);
  }
  return out;
}

namespace {

double logsumexp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

double mixture_log_density(const GMPrior& prior, const Eigen::VectorXd& z) {
  return logsumexp(log_component_densities(prior, z)) - std::log(static_cast<double>(prior.num_components()));
}

Eigen::VectorXd responsibilities(const GMPrior& prior, const Eigen::VectorXd& z) {
  const Eigen::VectorXd logs = log_component_densities(prior, z);
  const double m = logs.maxCoeff();
  Eigen::VectorXd r = (logs.array() - m).exp();
  return r / r.sum();
}

ClassificationResult classify(const GMPrior& prior, const Eigen::VectorXd& z, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  const Eigen::VectorXd r = responsibilities(prior, z);
  Eigen::Index best = 0;
  const double top = r.maxCoeff(&best);
  ClassificationResult result;
  result.responsibility = top;
  result.accepted = top >= alpha;
  if (result.accepted) result.component = static_cast<std::size_t>(best);
  return result;
}

Eigen::MatrixXd log_component_densities_rows(const GMPrior& prior, const Eigen::MatrixXd& codes) {
  Eigen::MatrixXd out(codes.rows(), prior.means.rows());
  for (Eigen::Index r = 0; r < codes.rows(); ++r)
    out.row(r) = log_component_densities(prior, codes.row(r).transpose()).transpose();
  return out;
}

Eigen::MatrixXd responsibilities_rows(const GMPrior& prior, const Eigen::MatrixXd& codes) {
  Eigen::MatrixXd out(codes.rows(), prior.means.rows());
  for (Eigen::Index r = 0; r < codes.rows(); ++r)
    out.row(r) = responsibilities(prior, codes.row(r).transpose()).transpose();
  return out;
}

Eigen::VectorXd sample_component(const GMPrior& prior, std::size_t i, Rng& rng) {
  if (i >= prior.num_components())
    throw std::out_of_range("component " + std::to_string(i) + " out of range for a prior with " +
                            std::to_string(prior.num_components()) + " components");
  std::normal_distribution<double> normal;
  const auto row = static_cast<Eigen::Index>(i);
  Eigen::VectorXd z(prior.means.cols());
  for (Eigen::Index d = 0; d < z.size(); ++d)
    z[d] = prior.means(row, d) + std::sqrt(prior.variances(row, d)) * normal(rng);
  return z;
}

Eigen::VectorXd warmup_sample(std::size_t latent_dim, Rng& rng) {
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  Eigen::VectorXd z(static_cast<Eigen::Index>(latent_dim));
  for (Eigen::Index d = 0; d < z.size(); ++d) {
    double v;
    do v = uniform(rng);
    while (v <= -1.0);
    z[d] = v;
  }
  return z;
}

Eigen::MatrixXd sample_component(const GMPrior& prior, std::size_t i, std::size_t n, std::uint64_t seed) {
  auto rng = derive_rng(seed, {0x9a11, i});
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), prior.means.cols());
  for (std::size_t r = 0; r < n; ++r) out.row(static_cast<Eigen::Index>(r)) = sample_component(prior, i, rng).transpose();
  return out;
}

Eigen::MatrixXd warmup_sample(std::size_t n, std::size_t latent_dim, std::uint64_t seed) {
  if (n == 0) throw ConfigError("warmup_sample needs n >= 1");
  auto rng = derive_rng(seed, {0x3a4b});
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(latent_dim));
  for (std::size_t r = 0; r < n; ++r) out.row(static_cast<Eigen::Index>(r)) = warmup_sample(latent_dim, rng).transpose();
  return out;
}

}  // namespace wdis
