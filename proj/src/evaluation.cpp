#include "wdis/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "wdis/error.hpp"
#include "wdis/training.hpp"

namespace wdis {

namespace {

constexpr std::size_t kBins = 20;
constexpr std::uint64_t kMetricSplitSeed = 0x5a9d;

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

void check_alphas(std::span<const double> alphas) {
  for (double a : alphas)
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("alpha " + format_double(a) + " outside [0, 1]");
}

// Equal-width bin index in [0, bins) over [lo, hi]; a constant column maps to bin 0.
std::size_t bin_of(double v, double lo, double hi, std::size_t bins) {
  if (!(hi > lo)) return 0;
  const double t = (v - lo) / (hi - lo);
  const auto b = static_cast<long>(std::floor(t * static_cast<double>(bins)));
  return static_cast<std::size_t>(std::clamp<long>(b, 0, static_cast<long>(bins) - 1));
}

std::vector<std::size_t> discretize(const Eigen::VectorXd& column) {
  const double lo = column.minCoeff(), hi = column.maxCoeff();
  std::vector<std::size_t> out(static_cast<std::size_t>(column.size()));
  for (Eigen::Index i = 0; i < column.size(); ++i) out[static_cast<std::size_t>(i)] = bin_of(column[i], lo, hi, kBins);
  return out;
}

// Relabels a factor column onto 0..C-1; throws on a constant column.
std::vector<std::size_t> factor_classes(const Eigen::MatrixXi& factors, Eigen::Index k, std::size_t& num_classes) {
  std::map<int, std::size_t> ids;
  for (Eigen::Index i = 0; i < factors.rows(); ++i) ids.emplace(factors(i, k), 0);
  if (ids.size() < 2) throw DataError("factor column " + std::to_string(k) + " is constant");
  std::size_t next = 0;
  for (auto& [value, id] : ids) id = next++;
  num_classes = ids.size();
  std::vector<std::size_t> out(static_cast<std::size_t>(factors.rows()));
  for (Eigen::Index i = 0; i < factors.rows(); ++i) out[static_cast<std::size_t>(i)] = ids[factors(i, k)];
  return out;
}

double entropy(std::span<const double> p) {
  double h = 0;
  for (double v : p)
    if (v > 0) h -= v * std::log(v);
  return h;
}

double mutual_information(std::span<const std::size_t> a, std::size_t na, std::span<const std::size_t> b,
                          std::size_t nb) {
  const double n = static_cast<double>(a.size());
  std::vector<double> joint(na * nb, 0.0), pa(na, 0.0), pb(nb, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[a[i] * nb + b[i]] += 1.0 / n;
    pa[a[i]] += 1.0 / n;
    pb[b[i]] += 1.0 / n;
  }
  double mi = 0;
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j)
      if (joint[i * nb + j] > 0) mi += joint[i * nb + j] * std::log(joint[i * nb + j] / (pa[i] * pb[j]));
  return std::max(0.0, mi);
}

void check_metric_inputs(const Eigen::MatrixXd& representation, const Eigen::MatrixXi& factors) {
  if (representation.rows() != factors.rows()) throw DataError("representation and factors differ in sample count");
  if (representation.rows() < 4) throw DataError("metrics need at least 4 samples");
  if (representation.cols() < 1 || factors.cols() < 1) throw DataError("metrics need at least one column");
  if (!representation.allFinite()) throw NumericError("representation contains non-finite values");
}

// Fixed pseudo-random two-thirds / one-third split of sample rows.
void metric_split(std::size_t n, std::vector<std::size_t>& train, std::vector<std::size_t>& test) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = derive_rng(kMetricSplitSeed, {n});
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t cut = std::max<std::size_t>(1, std::min(n - 1, (2 * n) / 3));
  train.assign(order.begin(), order.begin() + static_cast<long>(cut));
  test.assign(order.begin() + static_cast<long>(cut), order.end());
}

double majority_fraction(std::span<const std::size_t> labels, std::span<const std::size_t> rows, std::size_t classes) {
  std::vector<std::size_t> counts(classes, 0);
  for (auto r : rows) ++counts[labels[r]];
  return static_cast<double>(*std::max_element(counts.begin(), counts.end())) / static_cast<double>(rows.size());
}

double chance_normalized(double accuracy, double chance) {
  if (chance >= 1.0) return 0.0;
  return std::clamp((accuracy - chance) / (1.0 - chance), 0.0, 1.0);
}

struct LogisticFit {
  Eigen::MatrixXd weights;  // D x C
  Eigen::RowVectorXd bias;  // C
};

Eigen::MatrixXd softmax_rows(Eigen::MatrixXd logits) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    logits.row(r).array() -= logits.row(r).maxCoeff();
    logits.row(r) = logits.row(r).array().exp();
    logits.row(r) /= logits.row(r).sum();
  }
  return logits;
}

// L1-penalized multinomial logistic regression by accelerated proximal
// gradient (FISTA); the bias is unpenalized.
LogisticFit fit_l1_logistic(const Eigen::MatrixXd& x, std::span<const std::size_t> y, std::size_t classes,
                            double lambda) {
  const Eigen::Index n = x.rows(), d = x.cols(), c = static_cast<Eigen::Index>(classes);
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, c);
  for (Eigen::Index i = 0; i < n; ++i) onehot(i, static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)])) = 1.0;
  const Eigen::MatrixXd gram = x.transpose() * x / static_cast<double>(n);
  const double top = gram.size() ? Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram).eigenvalues().maxCoeff() : 0.0;
  const double step = 1.0 / (0.5 * (top + 1.0));

  LogisticFit fit{Eigen::MatrixXd::Zero(d, c), Eigen::RowVectorXd::Zero(c)};
  // Start the bias at the class log-frequencies.
  const Eigen::RowVectorXd freq = onehot.colwise().mean();
  fit.bias = (freq.array() + 1e-12).log().matrix();
  LogisticFit momentum = fit;
  double t = 1.0;
  for (int iter = 0; iter < 2000; ++iter) {
    const Eigen::MatrixXd logits = (x * momentum.weights).rowwise() + momentum.bias;
    const Eigen::MatrixXd residual = (softmax_rows(logits) - onehot) / static_cast<double>(n);
    const Eigen::MatrixXd gw = x.transpose() * residual;
    const Eigen::RowVectorXd gb = residual.colwise().sum();
    LogisticFit next;
    next.weights = momentum.weights - step * gw;
    next.weights = next.weights.unaryExpr([&](double w) {
      const double s = std::abs(w) - step * lambda;
      return s > 0 ? std::copysign(s, w) : 0.0;
    });
    next.bias = momentum.bias - step * gb;
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double change = (next.weights - fit.weights).cwiseAbs().maxCoeff() + (next.bias - fit.bias).cwiseAbs().maxCoeff();
    momentum.weights = next.weights + ((t - 1.0) / t_next) * (next.weights - fit.weights);
    momentum.bias = next.bias + ((t - 1.0) / t_next) * (next.bias - fit.bias);
    fit = std::move(next);
    t = t_next;
    if (change < 1e-9) break;
  }
  return fit;
}

}  // namespace

std::vector<ClusterEvalRow> cluster_eval(const GMPrior& prior, const Eigen::MatrixXd& codes,
                                         std::span<const std::size_t> labels, std::span<const double> alphas,
                                         std::size_t tau) {
  if (codes.rows() == 0) throw DataError("cluster evaluation needs a non-empty test set");
  if (static_cast<std::size_t>(codes.rows()) != labels.size()) throw DataError("one label per code is required");
  check_alphas(alphas);
  std::vector<double> top(labels.size());
  std::vector<std::size_t> best(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Eigen::VectorXd r = responsibilities(prior, codes.row(static_cast<Eigen::Index>(i)).transpose());
    Eigen::Index arg = 0;
    top[i] = r.maxCoeff(&arg);
    best[i] = static_cast<std::size_t>(arg);
  }
  std::vector<ClusterEvalRow> rows;
  for (double alpha : alphas) {
    ClusterEvalRow row;
    row.alpha = alpha;
    row.tau = tau;
    row.n_evaluated = labels.size();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (top[i] < alpha) continue;
      ++row.n_accepted;
      if (best[i] == labels[i]) ++correct;
    }
    row.acceptance_ratio = static_cast<double>(row.n_accepted) / static_cast<double>(row.n_evaluated);
    row.accuracy = row.n_accepted ? static_cast<double>(correct) / static_cast<double>(row.n_accepted) : 0.0;
    rows.push_back(row);
  }
  return rows;
}

namespace {

Eigen::MatrixXd encode_samples(const Architecture& arch, const NetworkParams<float>& params, const Dataset& dataset,
                               std::span<const std::size_t> samples) {
  constexpr std::size_t chunk = 256;
  Eigen::MatrixXd codes(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(arch.config.latent_dim));
  for (std::size_t begin = 0; begin < samples.size(); begin += chunk) {
    const auto part = samples.subspan(begin, std::min(chunk, samples.size() - begin));
    codes.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(part.size())) =
        encode(arch, params, image_batch(dataset, part)).cast<double>();
  }
  return codes;
}

std::vector<std::size_t> combination_labels(const Dataset& dataset, std::span<const std::size_t> samples) {
  std::vector<std::size_t> labels;
  for (auto s : samples) {
    const auto& c = dataset.samples.at(s).combination_index;
    if (!c) throw DataError("sample " + std::to_string(s) + " has no combination label");
    labels.push_back(*c);
  }
  return labels;
}

}  // namespace

std::vector<ClusterEvalRow> cluster_eval(const Architecture& arch, const NetworkParams<float>& params,
                                         const GMPrior& prior, const Dataset& dataset,
                                         std::span<const std::size_t> samples, std::span<const double> alphas,
                                         std::size_t tau) {
  if (samples.empty()) throw DataError("cluster evaluation needs a non-empty test set");
  const auto labels = combination_labels(dataset, samples);
  return cluster_eval(prior, encode_samples(arch, params, dataset, samples), labels, alphas, tau);
}

RelationalMap network_relational_map(const Architecture& arch, const NetworkParams<float>& params) {
  return [&arch, &params](const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& codes) -> Eigen::MatrixXd {
    const nn::Matrix<float> in = inputs.cast<float>();
    const nn::Matrix<float> rc = codes.cast<float>();
    return relate(arch, params, in, rc).cast<double>();
  };
}

std::vector<RelEvalRow> relational_eval(const GMPrior& prior, const RelationalMap& relate_fn,
                                        std::span<const RelationDef> relations, const RelationalEvalOptions& options) {
  if (relations.empty()) throw ConfigError("relational evaluation needs at least one relation");
  check_alphas(options.alphas);
  const std::size_t n_z = prior.latent_dim();
  const std::size_t code_dim = options.relation_code_dim ? options.relation_code_dim : std::max(relations.size(), n_z);
  const std::size_t arity = relations.front().arity;
  for (const auto& r : relations)
    if (r.arity != arity) throw ConfigError("relations of mixed arity cannot be evaluated together");

  // Valid tuples grouped by relation and first operand.
  std::vector<std::map<std::size_t, std::vector<std::vector<std::size_t>>>> by_first(relations.size());
  for (std::size_t r = 0; r < relations.size(); ++r)
    for (const auto& [in, out] : relations[r].table) by_first[r][in.front()].push_back(in);

  std::vector<RelEvalRow> rows;
  for (std::size_t depth : options.depths) {
    if (depth < 1) throw ConfigError("relation depth must be at least 1");
    const std::size_t trials = options.trials;
    struct Step {
      std::size_t relation;
      std::vector<std::size_t> tuple;
    };
    std::vector<std::vector<Step>> plans(trials);
    std::vector<std::size_t> truth(trials);
    std::vector<Rng> rngs;
    rngs.reserve(trials);
    std::uniform_int_distribution<std::size_t> start_dist(0, prior.num_components() - 1);
    for (std::size_t t = 0; t < trials; ++t) {
      rngs.push_back(derive_rng(options.seed, {0x4e1a, depth, t}));
      auto& rng = rngs.back();
      for (int attempt = 0;; ++attempt) {
        if (attempt == 10000) throw DataError("no relation chain of depth " + std::to_string(depth) + " exists");
        plans[t].clear();
        std::size_t state = start_dist(rng);
        bool ok = true;
        for (std::size_t k = 0; k < depth && ok; ++k) {
          std::vector<std::size_t> candidates;
          for (std::size_t r = 0; r < relations.size(); ++r)
            if (by_first[r].contains(state)) candidates.push_back(r);
          if (candidates.empty()) {
            ok = false;
            break;
          }
          const std::size_t r = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
          const auto& tuples = by_first[r].at(state);
          const auto& tuple = tuples[std::uniform_int_distribution<std::size_t>(0, tuples.size() - 1)(rng)];
          plans[t].push_back({r, tuple});
          state = apply_relation(relations[r], tuple);
        }
        if (ok) {
          truth[t] = state;
          break;
        }
      }
    }

    Eigen::MatrixXd current(static_cast<Eigen::Index>(trials), static_cast<Eigen::Index>(n_z));
    for (std::size_t t = 0; t < trials; ++t)
      current.row(static_cast<Eigen::Index>(t)) =
          sample_component(prior, plans[t].front().tuple.front(), rngs[t]).transpose();
    for (std::size_t k = 0; k < depth; ++k) {
      Eigen::MatrixXd inputs(static_cast<Eigen::Index>(trials), static_cast<Eigen::Index>(arity * n_z));
      Eigen::MatrixXd codes(static_cast<Eigen::Index>(trials), static_cast<Eigen::Index>(code_dim));
      for (std::size_t t = 0; t < trials; ++t) {
        const auto row = static_cast<Eigen::Index>(t);
        const auto& step = plans[t][k];
        inputs.block(row, 0, 1, static_cast<Eigen::Index>(n_z)) = current.row(row);
        for (std::size_t a = 1; a < arity; ++a)
          inputs.block(row, static_cast<Eigen::Index>(a * n_z), 1, static_cast<Eigen::Index>(n_z)) =
              sample_component(prior, step.tuple[a], rngs[t]).transpose();
        codes.row(row) = relation_code(prior, relations, step.relation, code_dim, rngs[t]).transpose();
      }
      current = relate_fn(inputs, codes);
      if (current.rows() != inputs.rows() || static_cast<std::size_t>(current.cols()) != n_z)
        throw std::runtime_error("relational map returned a batch of the wrong shape");
    }

    const auto cluster = cluster_eval(prior, current, truth, options.alphas, 0);
    for (const auto& c : cluster)
      rows.push_back({c.alpha, depth, c.accuracy, c.acceptance_ratio, trials, c.n_accepted});
  }
  return rows;
}

Eigen::MatrixXi factor_matrix(const FactorSpace& space, std::span<const std::size_t> labels) {
  Eigen::MatrixXi out(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(space.num_factors()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto digits = space.digits(labels[i]);
    for (std::size_t k = 0; k < digits.size(); ++k)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = static_cast<int>(digits[k]);
  }
  return out;
}

Eigen::MatrixXi factor_decode(const GMPrior& prior, const FactorSpace& space, const Eigen::MatrixXd& codes) {
  if (prior.num_components() != space.num_combinations())
    throw DataError("prior has " + std::to_string(prior.num_components()) + " components but the factor space has " +
                    std::to_string(space.num_combinations()) + " combinations");
  std::vector<std::size_t> labels;
  for (Eigen::Index i = 0; i < codes.rows(); ++i)
    labels.push_back(*classify(prior, codes.row(i).transpose(), 0.0).component);
  return factor_matrix(space, labels);
}

double mig(const Eigen::MatrixXd& representation, const Eigen::MatrixXi& factors) {
  check_metric_inputs(representation, factors);
  std::vector<std::vector<std::size_t>> binned;
  for (Eigen::Index d = 0; d < representation.cols(); ++d) binned.push_back(discretize(representation.col(d)));
  double total = 0;
  for (Eigen::Index k = 0; k < factors.cols(); ++k) {
    std::size_t classes = 0;
    const auto y = factor_classes(factors, k, classes);
    std::vector<double> p(classes, 0.0);
    for (auto v : y) p[v] += 1.0 / static_cast<double>(y.size());
    const double h = entropy(p);
    std::vector<double> mi;
    for (const auto& b : binned) mi.push_back(mutual_information(b, kBins, y, classes));
    std::sort(mi.begin(), mi.end(), std::greater<>());
    const double gap = mi.size() > 1 ? mi[0] - mi[1] : mi[0];
    total += std::clamp(gap / h, 0.0, 1.0);
  }
  return total / static_cast<double>(factors.cols());
}

double sap(const Eigen::MatrixXd& representation, const Eigen::MatrixXi& factors) {
  check_metric_inputs(representation, factors);
  std::vector<std::size_t> train, test;
  metric_split(static_cast<std::size_t>(representation.rows()), train, test);
  double total = 0;
  for (Eigen::Index k = 0; k < factors.cols(); ++k) {
    std::size_t classes = 0;
    const auto y = factor_classes(factors, k, classes);
    const double chance = majority_fraction(y, test, classes);
    std::vector<std::size_t> overall(classes, 0);
    for (auto r : train) ++overall[y[r]];
    const auto fallback = static_cast<std::size_t>(std::max_element(overall.begin(), overall.end()) - overall.begin());
    std::vector<double> scores;
    for (Eigen::Index d = 0; d < representation.cols(); ++d) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (auto r : train) {
        lo = std::min(lo, representation(static_cast<Eigen::Index>(r), d));
        hi = std::max(hi, representation(static_cast<Eigen::Index>(r), d));
      }
      std::vector<std::size_t> counts(kBins * classes, 0);
      for (auto r : train) ++counts[bin_of(representation(static_cast<Eigen::Index>(r), d), lo, hi, kBins) * classes + y[r]];
      std::vector<std::size_t> predict(kBins, fallback);
      for (std::size_t b = 0; b < kBins; ++b) {
        const auto first = counts.begin() + static_cast<long>(b * classes);
        const auto best = std::max_element(first, first + static_cast<long>(classes));
        if (*best > 0) predict[b] = static_cast<std::size_t>(best - first);
      }
      std::size_t correct = 0;
      for (auto r : test)
        if (predict[bin_of(representation(static_cast<Eigen::Index>(r), d), lo, hi, kBins)] == y[r]) ++correct;
      scores.push_back(chance_normalized(static_cast<double>(correct) / static_cast<double>(test.size()), chance));
    }
    std::sort(scores.begin(), scores.end(), std::greater<>());
    total += scores.size() > 1 ? scores[0] - scores[1] : scores[0];
  }
  return total / static_cast<double>(factors.cols());
}

DciScores dci_scores(const Eigen::MatrixXd& representation, const Eigen::MatrixXi& factors) {
  check_metric_inputs(representation, factors);
  std::vector<std::size_t> train, test;
  metric_split(static_cast<std::size_t>(representation.rows()), train, test);
  const Eigen::Index dims = representation.cols(), nf = factors.cols();

  const Eigen::MatrixXd xtrain = representation(train, Eigen::all);
  const Eigen::RowVectorXd mean = xtrain.colwise().mean();
  Eigen::RowVectorXd scale = ((xtrain.rowwise() - mean).array().square().colwise().mean()).sqrt();
  for (Eigen::Index d = 0; d < dims; ++d) scale[d] = scale[d] > 1e-12 ? 1.0 / scale[d] : 0.0;
  const Eigen::MatrixXd xs = ((representation.rowwise() - mean).array().rowwise() * scale.array()).matrix();
  const Eigen::MatrixXd xs_train = xs(train, Eigen::all), xs_test = xs(test, Eigen::all);
  // Noise-calibrated penalty: coefficients of dimensions unrelated to a factor
  // stay exactly zero with overwhelming probability.
  const double lambda = 3.0 / std::sqrt(static_cast<double>(train.size()));

  DciScores s;
  s.importance = Eigen::MatrixXd::Zero(dims, nf);
  double info = 0;
  for (Eigen::Index k = 0; k < nf; ++k) {
    std::size_t classes = 0;
    const auto y = factor_classes(factors, k, classes);
    std::vector<std::size_t> ytrain, ytest;
    for (auto r : train) ytrain.push_back(y[r]);
    for (auto r : test) ytest.push_back(y[r]);
    s.importance.col(k) = fit_l1_logistic(xs_train, ytrain, classes, lambda).weights.cwiseAbs().rowwise().mean();
    // The calibrated penalty blurs sharp multi-class boundaries, so held-out
    // accuracy comes from an unpenalized fit of the same model.
    const auto fit = fit_l1_logistic(xs_train, ytrain, classes, 0.0);
    const Eigen::MatrixXd logits = (xs_test * fit.weights).rowwise() + fit.bias;
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      Eigen::Index arg = 0;
      logits.row(i).maxCoeff(&arg);
      if (static_cast<std::size_t>(arg) == ytest[static_cast<std::size_t>(i)]) ++correct;
    }
    info += chance_normalized(static_cast<double>(correct) / static_cast<double>(test.size()),
                              majority_fraction(y, test, classes));
  }
  s.informativeness = info / static_cast<double>(nf);

  const double mass = s.importance.sum();
  if (mass <= 0) return s;  // no dimension carries information: D = C = 0
  auto normalized_entropy = [](const Eigen::VectorXd& w, Eigen::Index n) {
    if (n < 2) return 0.0;
    const double sum = w.sum();
    if (sum <= 0) return 1.0;
    std::vector<double> p(static_cast<std::size_t>(w.size()));
    for (Eigen::Index i = 0; i < w.size(); ++i) p[static_cast<std::size_t>(i)] = w[i] / sum;
    return entropy(p) / std::log(static_cast<double>(n));
  };
  for (Eigen::Index d = 0; d < dims; ++d) {
    const Eigen::VectorXd row = s.importance.row(d).transpose();
    s.disentanglement += (row.sum() / mass) * (1.0 - normalized_entropy(row, nf));
  }
  for (Eigen::Index k = 0; k < nf; ++k) {
    const Eigen::VectorXd col = s.importance.col(k);
    s.completeness += (col.sum() / mass) * (1.0 - normalized_entropy(col, dims));
  }
  return s;
}

double dci(const Eigen::MatrixXd& representation, const Eigen::MatrixXi& factors) {
  return dci_scores(representation, factors).average();
}

double reconstruction_error(const Architecture& arch, const NetworkParams<float>& params, const Dataset& dataset,
                            std::span<const std::size_t> samples) {
  if (samples.empty()) return 0.0;
  constexpr std::size_t chunk = 256;
  const auto kind = reconstruction_kind(arch.config.channels);
  double total = 0;
  for (std::size_t begin = 0; begin < samples.size(); begin += chunk) {
    const auto part = samples.subspan(begin, std::min(chunk, samples.size() - begin));
    const nn::Matrix<float> x = image_batch(dataset, part);
    const nn::Matrix<float> x_hat = decode(arch, params, encode(arch, params, x));
    total += reconstruction_loss<float>(x, x_hat, kind) * static_cast<double>(part.size());
  }
  return total / static_cast<double>(samples.size());
}

void write_cluster_csv(const std::string& path, const std::string& dataset, std::span<const ClusterEvalRow> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "dataset,alpha,tau,acc,ar\n";
  for (const auto& r : rows)
    out << dataset << ',' << format_double(r.alpha) << ',' << r.tau << ',' << format_double(r.accuracy) << ','
        << format_double(r.acceptance_ratio) << '\n';
}

void write_relational_csv(const std::string& path, const std::string& dataset, std::span<const RelEvalRow> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "dataset,alpha,depth,acc,ar\n";
  for (const auto& r : rows)
    out << dataset << ',' << format_double(r.alpha) << ',' << r.depth << ',' << format_double(r.accuracy) << ','
        << format_double(r.acceptance_ratio) << '\n';
}

void write_metrics_json(const std::string& path, const MetricReport& report, const RunMetadata& meta) {
  nlohmann::ordered_json j;
  j["dci"] = report.dci;
  j["dci_disentanglement"] = report.dci_disentanglement;
  j["dci_completeness"] = report.dci_completeness;
  j["dci_informativeness"] = report.dci_informativeness;
  j["mig"] = report.mig;
  j["sap"] = report.sap;
  j["reconstruction_error"] = report.reconstruction_error;
  j["run"] = {{"dataset", meta.dataset},
              {"seed", meta.seed},
              {"config_digest", meta.config_digest},
              {"checkpoint_digest", meta.checkpoint_digest}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

}  // namespace wdis
