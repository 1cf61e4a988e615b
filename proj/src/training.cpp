#include "wdis/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "wdis/error.hpp"

namespace wdis {

namespace {

constexpr std::uint64_t kStreamShuffle = 0x5417;
constexpr std::uint64_t kStreamStep = 0x57e9;

template <typename T>
T stable_sigmoid(T v) {
  return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
}

double clamp_probability(double p) { return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp); }

// Reconstruction term from decoder logits. Returns the loss and writes the
// gradient with respect to the logits.
template <typename T>
double reconstruction_from_logits(const nn::Matrix<T>& x, const nn::Matrix<T>& logits, ReconstructionKind kind,
                                  nn::Matrix<T>& grad) {
  const double count = static_cast<double>(x.size());
  grad.resize(x.rows(), x.cols());
  double total = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double l = static_cast<double>(logits.data()[i]);
    const double t = static_cast<double>(x.data()[i]);
    const double s = stable_sigmoid(l);
    if (kind == ReconstructionKind::Bernoulli) {
      const double c = clamp_probability(s);
      total -= t * std::log(c) + (1 - t) * std::log(1 - c);
      grad.data()[i] = static_cast<T>((s - t) / count);
    } else {
      total += (s - t) * (s - t);
      grad.data()[i] = static_cast<T>(2 * (s - t) * s * (1 - s) / count);
    }
  }
  return total / count;
}

template <typename T>
double autoencoder_backward(const Architecture& arch, const NetworkParams<T>& params, const nn::Matrix<T>& images,
                            const nn::Tape<T>& encoder_tape, const nn::Matrix<T>& codes, double beta,
                            double& adversarial, nn::ParameterSet<T>* encoder_grad, nn::ParameterSet<T>* decoder_grad) {
  nn::Tape<T> dec_tape;
  const nn::Matrix<T> logits = nn::forward(arch.decoder, params.decoder, codes, &dec_tape);
  nn::Matrix<T> grad_logits;
  const double recon = reconstruction_from_logits(images, logits, reconstruction_kind(arch.config.channels), grad_logits);
  nn::Matrix<T> grad_codes = nn::backward(arch.decoder, params.decoder, dec_tape, grad_logits, decoder_grad);

  nn::Tape<T> disc_tape;
  const nn::Matrix<T> disc_logits = nn::forward(arch.discriminator, params.discriminator, codes, &disc_tape);
  const double batch = static_cast<double>(codes.rows());
  nn::Matrix<T> grad_disc(disc_logits.rows(), 1);
  adversarial = 0;
  for (Eigen::Index r = 0; r < disc_logits.rows(); ++r) {
    const double d = stable_sigmoid(static_cast<double>(disc_logits(r, 0)));
    adversarial -= std::log(1 - clamp_probability(d));
    // d/da of -log(1 - sigmoid(a)) is sigmoid(a).
    grad_disc(r, 0) = static_cast<T>(beta * d / batch);
  }
  adversarial /= batch;
  if (beta != 0) grad_codes += nn::backward(arch.discriminator, params.discriminator, disc_tape, grad_disc,
                                              static_cast<nn::ParameterSet<T>*>(nullptr));
  if (encoder_grad) nn::backward(arch.encoder, params.encoder, encoder_tape, grad_codes, encoder_grad);
  return recon;
}

void check_finite(double v, const char* what, std::size_t epoch, std::uint64_t step) {
  if (!std::isfinite(v))
    throw NumericError(std::string("non-finite ") + what + " at epoch " + std::to_string(epoch + 1) + ", step " +
                       std::to_string(step));
}

// Valid input tuples per relation, materialized once for fast sampling.
class TupleSampler {
 public:
  TupleSampler(std::span<const RelationDef> relations) : relations_(relations) {
    if (relations.empty()) throw ConfigError("no relations to sample from");
    for (const auto& r : relations) {
      valid_.push_back(r.valid_inputs());
      if (valid_.back().empty()) throw ConfigError("relation '" + r.name + "' has no valid inputs");
    }
  }

  RelationTuple sample(const GMPrior& prior, std::size_t code_dim, Rng& rng) const {
    RelationTuple t;
    t.relation = std::uniform_int_distribution<std::size_t>(0, relations_.size() - 1)(rng);
    const auto& valid = valid_[t.relation];
    t.sources = valid[std::uniform_int_distribution<std::size_t>(0, valid.size() - 1)(rng)];
    for (auto s : t.sources) t.input_codes.push_back(sample_component(prior, s, rng));
    t.relation_code = relation_code(prior, relations_, t.relation, code_dim, rng);
    t.target = apply_relation(relations_[t.relation], t.sources);
    return t;
  }

 private:
  std::span<const RelationDef> relations_;
  std::vector<std::vector<std::vector<std::size_t>>> valid_;
};

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(beta >= 0) || !(gamma >= 0)) throw ConfigError("train.beta and train.gamma must be non-negative");
  if (!(learning_rate > 0)) throw ConfigError("train.learning_rate must be positive");
  if (batch_absae == 0 || batch_rel == 0) throw ConfigError("batch sizes must be positive");
  if (refresh_every == 0) throw ConfigError("train.refresh_every must be positive");
  if (!(variance_floor > 0)) throw ConfigError("train.variance_floor must be positive");
}

TrainConfig reference_train_config(Preset preset) {
  TrainConfig c;
  if (preset == Preset::Shapes3d) {
    c.warmup_epochs = 5000;
    c.full_epochs = 10000;
    c.learning_rate = 1e-5;
  }
  return c;
}

ReconstructionKind reconstruction_kind(std::size_t channels) {
  return channels == 1 ? ReconstructionKind::Bernoulli : ReconstructionKind::SquaredError;
}

template <typename T>
double reconstruction_loss(const nn::Matrix<T>& x, const nn::Matrix<T>& x_hat, ReconstructionKind kind,
                           nn::Matrix<T>* grad) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols())
    throw std::invalid_argument("reconstruction shapes differ");
  const double count = static_cast<double>(x.size());
  if (grad) grad->resize(x.rows(), x.cols());
  double total = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double t = static_cast<double>(x.data()[i]);
    const double h = static_cast<double>(x_hat.data()[i]);
    double g;
    if (kind == ReconstructionKind::Bernoulli) {
      const double c = clamp_probability(h);
      total -= t * std::log(c) + (1 - t) * std::log(1 - c);
      g = (c == h) ? -(t / c - (1 - t) / (1 - c)) / count : 0.0;
    } else {
      total += (h - t) * (h - t);
      g = 2 * (h - t) / count;
    }
    if (grad) grad->data()[i] = static_cast<T>(g);
  }
  return total / count;
}

double discriminator_loss(std::span<const double> d_prior, std::span<const double> d_encoded,
                          std::vector<double>* grad_prior, std::vector<double>* grad_encoded) {
  if (d_prior.empty() || d_encoded.empty()) throw std::invalid_argument("discriminator loss needs both batches");
  const double np = static_cast<double>(d_prior.size()), ne = static_cast<double>(d_encoded.size());
  double objective = 0;
  if (grad_encoded) grad_encoded->assign(d_encoded.size(), 0.0);
  if (grad_prior) grad_prior->assign(d_prior.size(), 0.0);
  for (std::size_t i = 0; i < d_encoded.size(); ++i) {
    const double c = clamp_probability(d_encoded[i]);
    objective += std::log(c) / ne;
    if (grad_encoded && c == d_encoded[i]) (*grad_encoded)[i] = 1.0 / (c * ne);
  }
  for (std::size_t i = 0; i < d_prior.size(); ++i) {
    const double c = clamp_probability(d_prior[i]);
    objective += std::log(1 - c) / np;
    if (grad_prior && c == d_prior[i]) (*grad_prior)[i] = -1.0 / ((1 - c) * np);
  }
  return objective;
}

template <typename T>
double relational_loss(const GMPrior& prior, const nn::Vector<T>& z, std::size_t target, nn::Vector<T>* grad) {
  if (target >= prior.num_components())
    throw std::out_of_range("target component " + std::to_string(target) + " out of range");
  if (static_cast<std::size_t>(z.size()) != prior.latent_dim())
    throw std::invalid_argument("code dimension does not match the prior");
  const auto row = static_cast<Eigen::Index>(target);
  const double log2pi = std::log(2.0 * std::numbers::pi);
  double loss = 0;
  if (grad) grad->resize(z.size());
  for (Eigen::Index d = 0; d < z.size(); ++d) {
    const double v = prior.variances(row, d);
    const double diff = static_cast<double>(z[d]) - prior.means(row, d);
    loss += 0.5 * (diff * diff / v + std::log(v) + log2pi);
    if (grad) (*grad)[d] = static_cast<T>(diff / v);
  }
  return loss;
}

template <typename T>
AutoencoderTerms<T> autoencoder_objective(const Architecture& arch, const NetworkParams<T>& params,
                                          const nn::Matrix<T>& images, double beta, nn::ParameterSet<T>* encoder_grad,
                                          nn::ParameterSet<T>* decoder_grad) {
  nn::Tape<T> tape;
  AutoencoderTerms<T> terms;
  terms.codes = nn::forward(arch.encoder, params.encoder, images, &tape);
  terms.reconstruction =
      autoencoder_backward(arch, params, images, tape, terms.codes, beta, terms.adversarial, encoder_grad, decoder_grad);
  return terms;
}

template <typename T>
double discriminator_objective(const Architecture& arch, const NetworkParams<T>& params, const nn::Matrix<T>& encoded,
                               const nn::Matrix<T>& prior_samples, nn::ParameterSet<T>* grad) {
  nn::Matrix<T> both(encoded.rows() + prior_samples.rows(), encoded.cols());
  both << encoded, prior_samples;
  nn::Tape<T> tape;
  const nn::Matrix<T> logits = nn::forward(arch.discriminator, params.discriminator, both, &tape);
  const double ne = static_cast<double>(encoded.rows()), np = static_cast<double>(prior_samples.rows());
  nn::Matrix<T> g(logits.rows(), 1);
  double objective = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double d = stable_sigmoid(static_cast<double>(logits(r, 0)));
    const double c = clamp_probability(d);
    if (r < encoded.rows()) {
      objective += std::log(c) / ne;
      g(r, 0) = static_cast<T>(-(1 - d) / ne);  // descent direction of -log d
    } else {
      objective += std::log(1 - c) / np;
      g(r, 0) = static_cast<T>(d / np);  // descent direction of -log(1 - d)
    }
  }
  if (grad) nn::backward(arch.discriminator, params.discriminator, tape, g, grad);
  return objective;
}

template <typename T>
double relational_objective(const Architecture& arch, const NetworkParams<T>& params, const GMPrior& prior,
                            const nn::Matrix<T>& inputs, const nn::Matrix<T>& relation_codes,
                            std::span<const std::size_t> targets, nn::ParameterSet<T>* grad) {
  if (static_cast<std::size_t>(inputs.rows()) != targets.size())
    throw std::invalid_argument("one target per relation input row is required");
  nn::Matrix<T> x(inputs.rows(), inputs.cols() + relation_codes.cols());
  x << inputs, relation_codes;
  nn::Tape<T> tape;
  const nn::Matrix<T> out = nn::forward(arch.relational, params.relational, x, &tape);
  const double batch = static_cast<double>(targets.size());
  nn::Matrix<T> g(out.rows(), out.cols());
  double total = 0;
  nn::Vector<T> row_grad;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    total += relational_loss<T>(prior, out.row(r).transpose(), targets[static_cast<std::size_t>(r)], &row_grad);
    g.row(r) = row_grad.transpose() / static_cast<T>(batch);
  }
  if (grad) nn::backward(arch.relational, params.relational, tape, g, grad);
  return total / batch;
}

Eigen::VectorXd relation_code(const GMPrior& prior, std::span<const RelationDef> relations, std::size_t relation,
                              std::size_t code_dim, Rng& rng) {
  Eigen::VectorXd code = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(code_dim));
  const auto& rel = relations[relation];
  if (rel.operator_component) {
    const Eigen::VectorXd z = sample_component(prior, *rel.operator_component, rng);
    if (static_cast<std::size_t>(z.size()) > code_dim) throw ConfigError("relation code narrower than the latent space");
    code.head(z.size()) = z;
  } else {
    if (relation >= code_dim) throw ConfigError("relation code narrower than the relation count");
    code[static_cast<Eigen::Index>(relation)] = 1.0;
  }
  return code;
}

RelationTuple make_relation_tuple(const GMPrior& prior, std::span<const RelationDef> relations, std::size_t code_dim,
                                  Rng& rng) {
  return TupleSampler(relations).sample(prior, code_dim, rng);
}

RelationTuple make_relation_tuple(const GMPrior& prior, std::span<const RelationDef> relations, std::size_t code_dim,
                                  std::uint64_t seed) {
  auto rng = derive_rng(seed, {0x7c91});
  return make_relation_tuple(prior, relations, code_dim, rng);
}

TrainState init_state(const Architecture& arch, std::uint64_t seed) {
  TrainState s;
  s.params = init_params<float>(arch, seed);
  s.adam_encoder = nn::AdamState<float>::like(s.params.encoder);
  s.adam_decoder = nn::AdamState<float>::like(s.params.decoder);
  s.adam_discriminator = nn::AdamState<float>::like(s.params.discriminator);
  s.adam_relational = nn::AdamState<float>::like(s.params.relational);
  return s;
}

StepLosses train_step_absae(const Architecture& arch, const TrainConfig& config, TrainState& state,
                            const nn::Matrix<float>& images, Rng& rng) {
  const std::size_t batch = static_cast<std::size_t>(images.rows());
  const std::size_t dim = arch.config.latent_dim;
  nn::Matrix<float> prior_samples(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(dim));
  std::uniform_int_distribution<std::size_t> pick(0, state.prior ? state.prior->num_components() - 1 : 0);
  for (std::size_t r = 0; r < batch; ++r) {
    const Eigen::VectorXd z = state.prior ? sample_component(*state.prior, pick(rng), rng) : warmup_sample(dim, rng);
    prior_samples.row(static_cast<Eigen::Index>(r)) = z.cast<float>().transpose();
  }

  auto& p = state.params;
  nn::Tape<float> tape;
  const nn::Matrix<float> codes = nn::forward(arch.encoder, p.encoder, images, &tape);

  // Both players read the same pre-update discriminator.
  auto disc_grad = p.discriminator.zeros_like();
  StepLosses out;
  out.disc = discriminator_objective(arch, p, codes, prior_samples, &disc_grad);

  auto enc_grad = p.encoder.zeros_like();
  auto dec_grad = p.decoder.zeros_like();
  out.reconstruction =
      autoencoder_backward(arch, p, images, tape, codes, config.beta, out.adversarial, &enc_grad, &dec_grad);
  check_finite(out.reconstruction, "reconstruction loss", state.epoch, state.step);
  check_finite(out.disc, "discriminator objective", state.epoch, state.step);

  const nn::AdamConfig adam{config.learning_rate};
  nn::adam_update(p.discriminator, disc_grad, state.adam_discriminator, adam);
  nn::adam_update(p.encoder, enc_grad, state.adam_encoder, adam);
  nn::adam_update(p.decoder, dec_grad, state.adam_decoder, adam);
  if (!p.encoder.all_finite() || !p.decoder.all_finite() || !p.discriminator.all_finite())
    throw NumericError("non-finite parameters after step " + std::to_string(state.step));
  ++state.step;
  return out;
}

double train_step_rel(const Architecture& arch, const TrainConfig& config, TrainState& state,
                      std::span<const RelationTuple> tuples) {
  if (!state.prior) throw ConfigError("relational training requires an estimated prior (full phase only)");
  if (tuples.empty()) throw std::invalid_argument("empty relation batch");
  const auto& cfg = arch.config;
  const auto rows = static_cast<Eigen::Index>(tuples.size());
  nn::Matrix<float> inputs(rows, static_cast<Eigen::Index>(cfg.relation_arity * cfg.latent_dim));
  nn::Matrix<float> codes(rows, static_cast<Eigen::Index>(cfg.relation_code_dim));
  std::vector<std::size_t> targets;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& t = tuples[static_cast<std::size_t>(r)];
    if (t.input_codes.size() != cfg.relation_arity) throw std::invalid_argument("tuple arity does not match network");
    for (std::size_t k = 0; k < t.input_codes.size(); ++k)
      inputs.block(r, static_cast<Eigen::Index>(k * cfg.latent_dim), 1, static_cast<Eigen::Index>(cfg.latent_dim)) =
          t.input_codes[k].cast<float>().transpose();
    codes.row(r) = t.relation_code.cast<float>().transpose();
    targets.push_back(t.target);
  }
  auto grad = state.params.relational.zeros_like();
  const double loss = relational_objective(arch, state.params, *state.prior, inputs, codes, targets, &grad);
  check_finite(loss, "relational loss", state.epoch, state.step);
  for (auto& g : grad) g.value *= static_cast<float>(config.gamma);
  nn::adam_update(state.params.relational, grad, state.adam_relational, nn::AdamConfig{config.learning_rate});
  if (!state.params.relational.all_finite()) throw NumericError("non-finite relational parameters");
  return loss;
}

void write_history(const std::string& path, std::span<const HistoryRow> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write history '" + path + "'");
  out << "epoch,phase,loss_ae,loss_disc,loss_rel,loss_total\n";
  for (const auto& r : rows)
    out << r.epoch << ',' << r.phase << ',' << format_double(r.loss_ae) << ',' << format_double(r.loss_disc) << ','
        << format_double(r.loss_rel) << ',' << format_double(r.loss_total) << '\n';
}

std::vector<HistoryRow> read_history(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read history '" + path + "'");
  std::string line;
  std::getline(in, line);
  if (line != "epoch,phase,loss_ae,loss_disc,loss_rel,loss_total") throw DataError("malformed history header in '" + path + "'");
  std::vector<HistoryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 6) throw DataError("malformed history row '" + line + "'");
    rows.push_back({std::stoul(f[0]), f[1], std::stod(f[2]), std::stod(f[3]), std::stod(f[4]), std::stod(f[5])});
  }
  return rows;
}

GMPrior estimate_from_labeled(const Architecture& arch, const NetworkParams<float>& params, const Dataset& dataset,
                              const LabeledSubset& labeled, double variance_floor) {
  std::vector<Eigen::MatrixXd> grouped;
  for (const auto& members : labeled.per_combination) {
    const nn::Matrix<float> codes = encode(arch, params, image_batch(dataset, members));
    grouped.push_back(codes.cast<double>());
  }
  GMPrior prior = estimate_prior(grouped, variance_floor);
  // Checkpoints hold float32; rounding here keeps resumed runs bit-identical.
  prior.means = prior.means.cast<float>().cast<double>();
  prior.variances = prior.variances.cast<float>().cast<double>();
  prior.variance_floor = static_cast<double>(static_cast<float>(variance_floor));
  return prior;
}

Checkpoint make_checkpoint(const Architecture& arch, const TrainState& state, std::uint64_t seed) {
  Checkpoint c;
  c.arch = arch.config;
  put_network(c, state.params);
  const std::pair<const char*, const nn::AdamState<float>*> moments[] = {{"encoder", &state.adam_encoder},
                                                                          {"decoder", &state.adam_decoder},
                                                                          {"discriminator", &state.adam_discriminator},
                                                                          {"relational", &state.adam_relational}};
  for (const auto& [name, adam] : moments) {
    put_parameters(c, std::string("adam.m/") + name + "/", adam->first);
    put_parameters(c, std::string("adam.v/") + name + "/", adam->second);
  }
  put_counters(c, "train.counters",
               {state.epoch, state.step, state.adam_encoder.step, state.adam_decoder.step,
                state.adam_discriminator.step, state.adam_relational.step});
  put_counters(c, "train.seed", {seed});
  if (state.prior) put_prior(c, *state.prior);
  return c;
}

TrainState restore_state(const Architecture& arch, const Checkpoint& checkpoint) {
  TrainState s = init_state(arch, 0);
  s.params = get_network(checkpoint, arch);
  const std::pair<const char*, nn::AdamState<float>*> moments[] = {{"encoder", &s.adam_encoder},
                                                                    {"decoder", &s.adam_decoder},
                                                                    {"discriminator", &s.adam_discriminator},
                                                                    {"relational", &s.adam_relational}};
  for (const auto& [name, adam] : moments) {
    get_parameters(checkpoint, std::string("adam.m/") + name + "/", adam->first);
    get_parameters(checkpoint, std::string("adam.v/") + name + "/", adam->second);
  }
  const auto counters = get_counters(checkpoint, "train.counters");
  if (counters.size() != 6) throw DataError("checkpoint training counters are malformed");
  s.epoch = counters[0];
  s.step = counters[1];
  s.adam_encoder.step = counters[2];
  s.adam_decoder.step = counters[3];
  s.adam_discriminator.step = counters[4];
  s.adam_relational.step = counters[5];
  if (has_prior(checkpoint)) s.prior = get_prior(checkpoint);
  return s;
}

TrainResult run_training(const Architecture& arch, const TrainConfig& config, const Dataset& dataset,
                         const LabeledSubset& labeled, std::span<const RelationDef> relations,
                         const TrainOptions& options) {
  config.validate();
  if (dataset.train.empty()) throw DataError("training split is empty");
  if (dataset.height() != arch.config.height || dataset.width() != arch.config.width ||
      dataset.channels() != arch.config.channels)
    throw ConfigError("dataset images are " + std::to_string(dataset.height()) + "x" + std::to_string(dataset.width()) +
                      "x" + std::to_string(dataset.channels()) + " but the architecture expects " +
                      std::to_string(arch.config.height) + "x" + std::to_string(arch.config.width) + "x" +
                      std::to_string(arch.config.channels));
  if (labeled.per_combination.size() != dataset.space.num_combinations())
    throw DataError("labeled subset does not cover every combination");
  const bool relational = config.full_epochs > 0 && !relations.empty();
  std::optional<TupleSampler> sampler;
  if (relational) sampler.emplace(relations);

  TrainResult result;
  TrainState& state = result.state;
  const bool resuming = options.resume && !options.checkpoint_path.empty() &&
                        std::filesystem::exists(options.checkpoint_path);
  if (resuming) {
    const Checkpoint c = read_checkpoint(options.checkpoint_path);
    const auto seed = get_counters(c, "train.seed");
    if (seed.size() != 1 || seed[0] != config.seed)
      throw ConfigError("checkpoint was trained with a different seed; resume needs the original seed");
    state = restore_state(arch, c);
    if (!options.history_path.empty() && std::filesystem::exists(options.history_path)) {
      for (auto& row : read_history(options.history_path))
        if (row.epoch <= state.epoch) result.history.push_back(std::move(row));
    }
  } else {
    state = init_state(arch, config.seed);
  }

  std::vector<std::size_t> order(dataset.train.begin(), dataset.train.end());
  const std::size_t n = order.size();
  const std::size_t steps = (n + config.batch_absae - 1) / config.batch_absae;
  const std::size_t total = config.total_epochs();
  const std::size_t stop = std::min(total, options.stop_after.value_or(total));

  auto save = [&] {
    if (!options.checkpoint_path.empty()) write_checkpoint(options.checkpoint_path, make_checkpoint(arch, state, config.seed));
    if (!options.history_path.empty()) write_history(options.history_path, result.history);
  };

  while (state.epoch < stop) {
    const std::size_t epoch = state.epoch;
    const bool full = epoch >= config.warmup_epochs;
    if (full && (!state.prior || (epoch - config.warmup_epochs) % config.refresh_every == 0))
      state.prior = estimate_from_labeled(arch, state.params, dataset, labeled, config.variance_floor);
    if (!full) state.prior.reset();

    std::copy(dataset.train.begin(), dataset.train.end(), order.begin());
    auto shuffle_rng = derive_rng(config.seed, {kStreamShuffle, epoch});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double ae = 0, disc = 0, rel = 0;
    std::vector<RelationTuple> tuples(config.batch_rel);
    for (std::size_t s = 0; s < steps; ++s) {
      auto rng = derive_rng(config.seed, {kStreamStep, epoch, s});
      const std::size_t begin = s * config.batch_absae, end = std::min(n, begin + config.batch_absae);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const auto losses = train_step_absae(arch, config, state, image_batch(dataset, idx), rng);
      const double w = static_cast<double>(end - begin) / static_cast<double>(n);
      ae += w * losses.reconstruction;
      disc += w * losses.disc;
      if (full && relational) {
        for (auto& t : tuples) t = sampler->sample(*state.prior, arch.config.relation_code_dim, rng);
        rel += train_step_rel(arch, config, state, tuples) / static_cast<double>(steps);
      }
    }

    state.epoch = epoch + 1;
    HistoryRow row{state.epoch, full ? "full" : "warmup", ae, disc, rel, ae + config.beta * disc + config.gamma * rel};
    result.history.push_back(row);
    if (options.on_epoch) options.on_epoch(row);
    const bool cadence = config.checkpoint_every > 0 && state.epoch % config.checkpoint_every == 0;
    if (cadence || state.epoch == stop) save();
  }
  return result;
}

#define WDIS_TRAINING_INSTANTIATE(T)                                                                                \
  template double reconstruction_loss<T>(const nn::Matrix<T>&, const nn::Matrix<T>&, ReconstructionKind,            \
                                         nn::Matrix<T>*);                                                           \
  template double relational_loss<T>(const GMPrior&, const nn::Vector<T>&, std::size_t, nn::Vector<T>*);            \
  template AutoencoderTerms<T> autoencoder_objective<T>(const Architecture&, const NetworkParams<T>&,               \
                                                        const nn::Matrix<T>&, double, nn::ParameterSet<T>*,         \
                                                        nn::ParameterSet<T>*);                                      \
  template double discriminator_objective<T>(const Architecture&, const NetworkParams<T>&, const nn::Matrix<T>&,    \
                                             const nn::Matrix<T>&, nn::ParameterSet<T>*);                           \
  template double relational_objective<T>(const Architecture&, const NetworkParams<T>&, const GMPrior&,             \
                                          const nn::Matrix<T>&, const nn::Matrix<T>&, std::span<const std::size_t>, \
                                          nn::ParameterSet<T>*);

WDIS_TRAINING_INSTANTIATE(float)
WDIS_TRAINING_INSTANTIATE(double)

#undef WDIS_TRAINING_INSTANTIATE

}  // namespace wdis
