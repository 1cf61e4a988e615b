#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "wdis/error.hpp"
#include "wdis/evaluation.hpp"

using namespace wdis;

namespace {

// Exhaustive grid over independent factors, repeated `copies` times.
Eigen::MatrixXi factor_grid(const std::vector<int>& radices, int copies) {
  int n = 1;
  for (int r : radices) n *= r;
  Eigen::MatrixXi f(n * copies, static_cast<Eigen::Index>(radices.size()));
  for (int row = 0; row < n * copies; ++row) {
    int rest = row % n;
    for (int k = static_cast<int>(radices.size()) - 1; k >= 0; --k) {
      f(row, k) = rest % radices[static_cast<std::size_t>(k)];
      rest /= radices[static_cast<std::size_t>(k)];
    }
  }
  return f;
}

Eigen::MatrixXd noise(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng = derive_rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  return Eigen::MatrixXd::NullaryExpr(rows, cols, [&] { return g(rng); });
}

GMPrior separated_prior(std::size_t n, std::size_t dim, double spacing) {
  GMPrior p;
  p.means = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < p.means.rows(); ++i) {
    std::size_t rest = static_cast<std::size_t>(i);
    for (Eigen::Index j = 0; j < p.means.cols(); ++j) {
      p.means(i, j) = spacing * static_cast<double>(rest % 3);
      rest /= 3;
    }
  }
  p.variances = Eigen::MatrixXd::Ones(p.means.rows(), p.means.cols());
  return p;
}

const std::vector<double> kAlphas{0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99};

}  // namespace

TEST_CASE("cluster eval on oracle codes") {
  const GMPrior p = separated_prior(27, 3, 10.0);
  std::vector<std::size_t> labels(27);
  std::iota(labels.begin(), labels.end(), 0);
  const auto rows = cluster_eval(p, p.means, labels, kAlphas, 5);
  REQUIRE(rows.size() == kAlphas.size());
  for (const auto& r : rows) {
    CHECK(r.accuracy == 1.0);
    CHECK(r.acceptance_ratio == 1.0);
    CHECK(r.tau == 5);
  }
  CHECK_THROWS(cluster_eval(p, Eigen::MatrixXd(0, 3), {}, kAlphas, 5));
}

TEST_CASE("cluster eval on prior samples and acceptance monotonicity") {
  const GMPrior p = separated_prior(27, 3, 10.0);
  Eigen::MatrixXd codes(27 * 200, 3);
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < 27; ++c) {
    codes.middleRows(static_cast<Eigen::Index>(c * 200), 200) = sample_component(p, c, 200, c);
    labels.insert(labels.end(), 200, c);
  }
  const auto rows = cluster_eval(p, codes, labels, kAlphas, 30);
  CHECK(rows[0].acceptance_ratio == 1.0);
  CHECK(rows[0].n_accepted == rows[0].n_evaluated);
  CHECK(rows[3].accuracy >= 0.999);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].acceptance_ratio <= rows[i - 1].acceptance_ratio);

  // Overlapping components: rejection actually happens and stays monotone.
  const GMPrior close = separated_prior(27, 3, 1.0);
  const auto loose = cluster_eval(close, codes / 10.0, labels, kAlphas, 30);
  CHECK(loose[0].acceptance_ratio == 1.0);
  CHECK(loose.back().acceptance_ratio < 0.5);
  for (std::size_t i = 1; i < loose.size(); ++i) CHECK(loose[i].acceptance_ratio <= loose[i - 1].acceptance_ratio);
  for (const auto& r : loose)
    CHECK(r.acceptance_ratio == doctest::Approx(static_cast<double>(r.n_accepted) / static_cast<double>(r.n_evaluated)));
}

TEST_CASE("relational eval with an oracle map is exact") {
  const auto space = build_factor_space(Preset::Dsprites);
  const auto rels = builtin_relations(space, Preset::Dsprites);
  const GMPrior p = separated_prior(27, 8, 10.0);
  // Decodes the one-hot relation code and the input component symbolically.
  RelationalMap oracle = [&](const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& codes) {
    Eigen::MatrixXd out(inputs.rows(), 8);
    for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
      Eigen::Index rel;
      codes.row(r).maxCoeff(&rel);
      const auto src = *classify(p, inputs.row(r).transpose(), 0.0).component;
      out.row(r) = p.means.row(static_cast<Eigen::Index>(apply_relation(rels[static_cast<std::size_t>(rel)],
                                                                        std::vector<std::size_t>{src})));
    }
    return out;
  };
  RelationalEvalOptions opt;
  opt.trials = 500;
  opt.alphas = {0.0, 0.5, 0.9};
  opt.seed = 4;
  const auto rows = relational_eval(p, oracle, rels, opt);
  REQUIRE(rows.size() == 9);
  for (const auto& r : rows) {
    CHECK(r.accuracy == 1.0);
    CHECK(r.acceptance_ratio == 1.0);
    CHECK(r.trials == 500);
  }
  const auto again = relational_eval(p, oracle, rels, opt);
  CHECK(again[4].accuracy == rows[4].accuracy);
}

TEST_CASE("relational eval with a constant map sits at chance") {
  const auto space = build_factor_space(Preset::Dsprites);
  const auto rels = builtin_relations(space, Preset::Dsprites);
  const GMPrior p = separated_prior(27, 8, 10.0);
  // Random output components, independent of the input.
  Rng rng = derive_rng(8);
  RelationalMap random_map = [&](const Eigen::MatrixXd& inputs, const Eigen::MatrixXd&) {
    std::uniform_int_distribution<Eigen::Index> pick(0, 26);
    Eigen::MatrixXd out(inputs.rows(), 8);
    for (Eigen::Index r = 0; r < inputs.rows(); ++r) out.row(r) = p.means.row(pick(rng));
    return out;
  };
  RelationalEvalOptions opt;
  opt.trials = 4000;
  opt.depths = {1};
  opt.alphas = {0.0};
  const auto rows = relational_eval(p, random_map, rels, opt);
  // 1/27 with a binomial standard error near 0.003.
  CHECK(std::abs(rows[0].accuracy - 1.0 / 27) < 0.015);
}

TEST_CASE("hwf rollouts chain into the first operand") {
  const auto space = build_factor_space(Preset::HwfLike);
  const auto rels = builtin_relations(space, Preset::HwfLike);
  const GMPrior p = separated_prior(13, 4, 10.0);
  RelationalMap oracle = [&](const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& codes) {
    Eigen::MatrixXd out(inputs.rows(), 4);
    for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
      const auto a = *classify(p, inputs.row(r).head(4).transpose(), 0.0).component;
      const auto b = *classify(p, inputs.row(r).tail(4).transpose(), 0.0).component;
      const auto op = *classify(p, codes.row(r).head(4).transpose(), 0.0).component;
      const auto& rel = *std::find_if(rels.begin(), rels.end(), [&](const auto& x) { return x.operator_component == op; });
      out.row(r) = p.means.row(static_cast<Eigen::Index>(apply_relation(rel, std::vector<std::size_t>{a, b})));
    }
    return out;
  };
  RelationalEvalOptions opt;
  opt.trials = 300;
  opt.alphas = {0.0};
  const auto rows = relational_eval(p, oracle, rels, opt);
  for (const auto& r : rows) CHECK(r.accuracy == 1.0);
}

TEST_CASE("factor decoding inverts the combination index at component means") {
  const auto space = build_factor_space(Preset::Dsprites);
  const GMPrior p = separated_prior(27, 3, 10.0);
  const Eigen::MatrixXi decoded = factor_decode(p, space, p.means);
  std::vector<std::size_t> labels(27);
  std::iota(labels.begin(), labels.end(), 0);
  CHECK(decoded == factor_matrix(space, labels));
  for (std::size_t i = 0; i < 27; ++i) {
    const auto combo = index_to_combination(space, i);
    for (std::size_t k = 0; k < 3; ++k)
      CHECK(space.factor(k).values[static_cast<std::size_t>(decoded(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)))] ==
            combo.values[k]);
  }
}

TEST_CASE("metrics on a perfect representation") {
  const Eigen::MatrixXi f = factor_grid({3, 4, 5}, 20);
  const Eigen::MatrixXd rep = f.cast<double>();
  CHECK(mig(rep, f) >= 0.98);
  CHECK(sap(rep, f) >= 0.98);
  const auto d = dci_scores(rep, f);
  CHECK(d.average() >= 0.98);
  CHECK(dci(rep, f) == doctest::Approx(d.average()));

  // Column permutation leaves every score unchanged.
  Eigen::MatrixXd perm(rep.rows(), 3);
  perm << rep.col(2), rep.col(0), rep.col(1);
  CHECK(mig(perm, f) == doctest::Approx(mig(rep, f)).epsilon(1e-12));
  CHECK(sap(perm, f) == doctest::Approx(sap(rep, f)).epsilon(1e-12));
  CHECK(dci(perm, f) == doctest::Approx(dci(rep, f)).epsilon(1e-9));
}

TEST_CASE("metrics on representations independent of the factors") {
  const Eigen::MatrixXi f = factor_grid({3, 4, 5}, 20);
  const Eigen::MatrixXd rep = noise(f.rows(), 3, 12);
  CHECK(mig(rep, f) <= 0.05);
  CHECK(sap(rep, f) <= 0.05);
  CHECK(dci(rep, f) <= 0.05);
}

TEST_CASE("duplicated columns") {
  const Eigen::MatrixXi f = factor_grid({3, 4}, 30);
  Eigen::MatrixXd dup(f.rows(), 3);
  dup << f.col(0).cast<double>(), f.col(0).cast<double>(), f.col(1).cast<double>();
  // The top two dimensions tie for the duplicated factor.
  const double m = mig(dup, f);
  CHECK(m == doctest::Approx(0.5).epsilon(0.02));
  CHECK(dci_scores(dup, f).completeness < 0.99);
}

TEST_CASE("metric preconditions") {
  Eigen::MatrixXi constant = Eigen::MatrixXi::Zero(50, 1);
  const Eigen::MatrixXd rep = noise(50, 2, 1);
  CHECK_THROWS(mig(rep, constant));
  CHECK_THROWS(sap(rep, constant));
  CHECK_THROWS(dci(rep, constant));
}

TEST_CASE("metric scores stay in the unit interval") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Eigen::MatrixXi f = factor_grid({2, 3}, 25);
    Eigen::MatrixXd rep = noise(f.rows(), 4, s);
    rep.col(1) += f.col(s % 2).cast<double>() * 0.5 * static_cast<double>(s);
    for (double v : {mig(rep, f), sap(rep, f), dci(rep, f)}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("report files") {
  const auto dir = std::filesystem::temp_directory_path() / "wdis_test_reports";
  std::filesystem::create_directories(dir);
  write_cluster_csv((dir / "c.csv").string(), "dsprites", std::vector<ClusterEvalRow>{{0.5, 10, 0.75, 0.9, 10, 9}});
  std::ifstream c(dir / "c.csv");
  std::string header, row;
  std::getline(c, header);
  std::getline(c, row);
  CHECK(header == "dataset,alpha,tau,acc,ar");
  CHECK(row == "dsprites,0.5,10,0.75,0.9");

  write_relational_csv((dir / "r.csv").string(), "hwf-like", std::vector<RelEvalRow>{{0, 5, 1, 1, 100, 100}});
  std::ifstream r(dir / "r.csv");
  std::getline(r, header);
  CHECK(header == "dataset,alpha,depth,acc,ar");

  write_metrics_json((dir / "m.json").string(), MetricReport{0.5, 0.4, 0.5, 0.6, 0.3, 0.2, 0.1},
                     RunMetadata{"dsprites", 7, "abc", "def"});
  std::ifstream m(dir / "m.json");
  const auto j = nlohmann::json::parse(m);
  CHECK(j["dci"] == 0.5);
  CHECK(j["mig"] == 0.3);
  CHECK(j["run"]["seed"] == 7);
  CHECK(j["run"]["checkpoint_digest"] == "def");
}
