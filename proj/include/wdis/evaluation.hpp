#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "wdis/datasets.hpp"
#include "wdis/factors.hpp"
#include "wdis/networks.hpp"
#include "wdis/prior.hpp"

namespace wdis {

struct ClusterEvalRow {
  double alpha = 0;
  std::size_t tau = 0;
  double accuracy = 0;
  double acceptance_ratio = 0;
  std::size_t n_evaluated = 0;
  std::size_t n_accepted = 0;
};

struct RelEvalRow {
  double alpha = 0;
  std::size_t depth = 1;
  double accuracy = 0;
  double acceptance_ratio = 0;
  std::size_t trials = 0;
  std::size_t n_accepted = 0;
};

struct MetricReport {
  double dci = 0;
  double dci_disentanglement = 0, dci_completeness = 0, dci_informativeness = 0;
  double mig = 0;
  double sap = 0;
  double reconstruction_error = 0;
};

// Classification sweep over precomputed codes (rows) with known combination
// labels. Accuracy counts accepted samples only.
std::vector<ClusterEvalRow> cluster_eval(const GMPrior& prior, const Eigen::MatrixXd& codes,
                                         std::span<const std::size_t> labels, std::span<const double> alphas,
                                         std::size_t tau);

// Encodes `samples` of the dataset first.
std::vector<ClusterEvalRow> cluster_eval(const Architecture& arch, const NetworkParams<float>& params,
                                         const GMPrior& prior, const Dataset& dataset,
                                         std::span<const std::size_t> samples, std::span<const double> alphas,
                                         std::size_t tau);

// Maps a batch of relation inputs (rows of R concatenated codes) and relation
// codes to output codes.
using RelationalMap = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& relation_codes)>;

RelationalMap network_relational_map(const Architecture& arch, const NetworkParams<float>& params);

struct RelationalEvalOptions {
  std::vector<std::size_t> depths{1, 5, 10};
  std::vector<double> alphas{0.0, 0.1, 0.3, 0.5, 0.7, 0.9};
  std::size_t trials = 10000;
  std::size_t relation_code_dim = 0;  // 0 selects max(relation count, N_z)
  std::uint64_t seed = 0;
};

// Rolls out `depth` randomly chosen valid relations from a prior sample,
// chaining each output code into the next step (into the first operand for
// binary relations, with the second operand drawn fresh). Only the final code
// is classified.
std::vector<RelEvalRow> relational_eval(const GMPrior& prior, const RelationalMap& relate,
                                        std::span<const RelationDef> relations, const RelationalEvalOptions& options);

// Winning component at alpha = 0, unranked into K factor value indices.
Eigen::MatrixXi factor_decode(const GMPrior& prior, const FactorSpace& space, const Eigen::MatrixXd& codes);
// K factor value indices per combination label.
Eigen::MatrixXi factor_matrix(const FactorSpace& space, std::span<const std::size_t> labels);

// Representation rows are samples; factor rows hold integer value indices.
double mig(const Eigen::MatrixXd& representation, const Eigen::MatrixXi& factors);
double sap(const Eigen::MatrixXd& representation, const Eigen::MatrixXi& factors);

struct DciScores {
  double disentanglement = 0, completeness = 0, informativeness = 0;
  Eigen::MatrixXd importance;  // dimensions x factors
  double average() const { return (disentanglement + completeness + informativeness) / 3.0; }
};
DciScores dci_scores(const Eigen::MatrixXd& representation, const Eigen::MatrixXi& factors);
double dci(const Eigen::MatrixXd& representation, const Eigen::MatrixXi& factors);

double reconstruction_error(const Architecture& arch, const NetworkParams<float>& params, const Dataset& dataset,
                            std::span<const std::size_t> samples);

struct RunMetadata {
  std::string dataset;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::string checkpoint_digest;
};

void write_cluster_csv(const std::string& path, const std::string& dataset, std::span<const ClusterEvalRow> rows);
void write_relational_csv(const std::string& path, const std::string& dataset, std::span<const RelEvalRow> rows);
void write_metrics_json(const std::string& path, const MetricReport& report, const RunMetadata& meta);

}  // namespace wdis
