#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wdis/checkpoint.hpp"
#include "wdis/datasets.hpp"
#include "wdis/factors.hpp"
#include "wdis/networks.hpp"
#include "wdis/nn.hpp"
#include "wdis/prior.hpp"

namespace wdis {

inline constexpr double kProbabilityClamp = 1e-6;

struct TrainConfig {
  double beta = 1.0;
  double gamma = 1.0;
  std::size_t warmup_epochs = 1000;
  std::size_t full_epochs = 5000;
  std::size_t batch_absae = 1024;
  std::size_t batch_rel = 128;
  double learning_rate = 1e-4;
  std::size_t refresh_every = 50;
  std::size_t checkpoint_every = 0;  // 0 writes only the final checkpoint
  double variance_floor = kVarianceFloor;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
  std::size_t total_epochs() const { return warmup_epochs + full_epochs; }
};

// Reference schedule: 1000 + 5000 epochs at learning rate 1e-4, or 5000 + 10000
// at 1e-5 for shapes3d.
TrainConfig reference_train_config(Preset preset);

enum class ReconstructionKind { Bernoulli, SquaredError };
// Bernoulli cross-entropy for single-channel images, squared error otherwise.
ReconstructionKind reconstruction_kind(std::size_t channels);

// Mean per-element loss; when `grad` is non-null it receives d loss / d x_hat.
template <typename T>
double reconstruction_loss(const nn::Matrix<T>& x, const nn::Matrix<T>& x_hat, ReconstructionKind kind,
                           nn::Matrix<T>* grad = nullptr);

// Adversarial objective E_q[log d(z)] + E_p[log(1 - d(z))] with encoded codes
// labeled 1 and prior samples labeled 0. The discriminator ascends it.
// Gradients are with respect to the probabilities; clamped entries get zero.
double discriminator_loss(std::span<const double> d_prior, std::span<const double> d_encoded,
                          std::vector<double>* grad_prior = nullptr, std::vector<double>* grad_encoded = nullptr);

// Negative log density of z under component `target`.
template <typename T>
double relational_loss(const GMPrior& prior, const nn::Vector<T>& z, std::size_t target, nn::Vector<T>* grad = nullptr);

// Per-network gradients of the autoencoder objective L_AE + beta * L_ADV,
// where L_ADV = -mean log(1 - d(E(x))) is the encoder's non-saturating
// adversarial surrogate. The discriminator is read, not differentiated.
template <typename T>
struct AutoencoderTerms {
  double reconstruction = 0;
  double adversarial = 0;
  nn::Matrix<T> codes;
};

template <typename T>
AutoencoderTerms<T> autoencoder_objective(const Architecture& arch, const NetworkParams<T>& params,
                                          const nn::Matrix<T>& images, double beta, nn::ParameterSet<T>* encoder_grad,
                                          nn::ParameterSet<T>* decoder_grad);

// Value of the adversarial objective on (encoded codes, prior samples) and the
// gradient of its negation (the descent direction) for the discriminator.
template <typename T>
double discriminator_objective(const Architecture& arch, const NetworkParams<T>& params, const nn::Matrix<T>& encoded,
                               const nn::Matrix<T>& prior_samples, nn::ParameterSet<T>* grad);

// Mean relational loss of the network over a batch and its parameter gradient.
template <typename T>
double relational_objective(const Architecture& arch, const NetworkParams<T>& params, const GMPrior& prior,
                            const nn::Matrix<T>& inputs, const nn::Matrix<T>& relation_codes,
                            std::span<const std::size_t> targets, nn::ParameterSet<T>* grad);

struct RelationTuple {
  std::size_t relation = 0;           // index into the relation list
  std::vector<std::size_t> sources;   // input component indices
  std::vector<Eigen::VectorXd> input_codes;
  Eigen::VectorXd relation_code;
  std::size_t target = 0;
};

// One-hot over the relation list, or a draw from the operator component for
// relations identified by a symbol; zero-padded to `code_dim`.
Eigen::VectorXd relation_code(const GMPrior& prior, std::span<const RelationDef> relations, std::size_t relation,
                              std::size_t code_dim, Rng& rng);

RelationTuple make_relation_tuple(const GMPrior& prior, std::span<const RelationDef> relations, std::size_t code_dim,
                                  Rng& rng);
RelationTuple make_relation_tuple(const GMPrior& prior, std::span<const RelationDef> relations, std::size_t code_dim,
                                  std::uint64_t seed);

struct TrainState {
  NetworkParams<float> params;
  nn::AdamState<float> adam_encoder, adam_decoder, adam_discriminator, adam_relational;
  std::optional<GMPrior> prior;  // absent during warmup
  std::size_t epoch = 0;         // completed epochs
  std::uint64_t step = 0;        // completed AbsAE iterations
};

TrainState init_state(const Architecture& arch, std::uint64_t seed);

struct StepLosses {
  double reconstruction = 0;
  double disc = 0;  // adversarial objective value
  double adversarial = 0;
  double rel = 0;
};

// One discriminator ascent step and one encoder/decoder descent step. Prior
// samples come from the uniform warmup prior while state.prior is empty.
StepLosses train_step_absae(const Architecture& arch, const TrainConfig& config, TrainState& state,
                            const nn::Matrix<float>& images, Rng& rng);

// One descent step of gamma * mean relational loss; only relational
// parameters change. Requires a prior.
double train_step_rel(const Architecture& arch, const TrainConfig& config, TrainState& state,
                      std::span<const RelationTuple> tuples);

struct HistoryRow {
  std::size_t epoch = 0;
  std::string phase;
  double loss_ae = 0, loss_disc = 0, loss_rel = 0, loss_total = 0;
};

void write_history(const std::string& path, std::span<const HistoryRow> rows);
std::vector<HistoryRow> read_history(const std::string& path);

// Encodes the labeled subset and estimates the prior, rounded to the float
// precision used by checkpoints.
GMPrior estimate_from_labeled(const Architecture& arch, const NetworkParams<float>& params, const Dataset& dataset,
                              const LabeledSubset& labeled, double variance_floor);

Checkpoint make_checkpoint(const Architecture& arch, const TrainState& state, std::uint64_t seed);
TrainState restore_state(const Architecture& arch, const Checkpoint& checkpoint);

struct TrainOptions {
  std::string checkpoint_path;  // empty disables checkpoint files
  std::string history_path;     // empty disables the CSV log
  bool resume = false;          // continue from checkpoint_path when it exists
  std::optional<std::size_t> stop_after;  // stop once this many epochs are complete
  std::function<void(const HistoryRow&)> on_epoch;
};

struct TrainResult {
  TrainState state;
  std::vector<HistoryRow> history;
};

TrainResult run_training(const Architecture& arch, const TrainConfig& config, const Dataset& dataset,
                         const LabeledSubset& labeled, std::span<const RelationDef> relations,
                         const TrainOptions& options = {});

}  // namespace wdis
