#include <doctest.h>

#include "wdis/error.hpp"
#include "wdis/prior.hpp"
#include "wdis/rng.hpp"

using namespace wdis;

namespace {

GMPrior random_prior(Rng& rng, std::size_t n, std::size_t dim) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.05, 3.0);
  GMPrior p;
  p.means = Eigen::MatrixXd::NullaryExpr(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim),
                                         [&] { return 3.0 * g(rng); });
  p.variances = Eigen::MatrixXd::NullaryExpr(p.means.rows(), p.means.cols(), [&] { return u(rng); });
  return p;
}

// Direct product of univariate normal densities, summed in long double.
long double brute_density(const GMPrior& p, const Eigen::VectorXd& z) {
  long double total = 0;
  for (Eigen::Index i = 0; i < p.means.rows(); ++i) {
    long double d = 1;
    for (Eigen::Index j = 0; j < z.size(); ++j) {
      const long double v = p.variances(i, j), diff = z[j] - p.means(i, j);
      d *= std::exp(-diff * diff / (2 * v)) / std::sqrt(2 * static_cast<long double>(M_PI) * v);
    }
    total += d;
  }
  return total / static_cast<long double>(p.means.rows());
}

}  // namespace

TEST_CASE("mixture density matches brute force summation") {
  Rng rng = derive_rng(101);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto p = random_prior(rng, 1 + static_cast<std::size_t>(trial % 27), 1 + static_cast<std::size_t>(trial % 8));
    // Draw near a component so the density is representable.
    Eigen::VectorXd z = p.means.row(trial % p.means.rows()).transpose();
    for (Eigen::Index j = 0; j < z.size(); ++j) z[j] += g(rng);
    const long double brute = brute_density(p, z);
    REQUIRE(brute > 0);
    const double rel = std::abs(mixture_log_density(p, z) - static_cast<double>(std::log(brute))) /
                       std::max(1.0, std::abs(static_cast<double>(std::log(brute))));
    REQUIRE(rel < 1e-9);
    const auto r = responsibilities(p, z);
    REQUIRE(std::abs(r.sum() - 1.0) < 1e-9);
  }
}

TEST_CASE("far codes stay finite") {
  GMPrior p;
  p.means = Eigen::MatrixXd::Zero(3, 2);
  p.means(1, 0) = 1;
  p.means(2, 0) = -1;
  p.variances = Eigen::MatrixXd::Constant(3, 2, 1e-4);
  Eigen::VectorXd z(2);
  z << 40, 0;
  CHECK(std::isfinite(mixture_log_density(p, z)));
  const auto r = responsibilities(p, z);
  CHECK(r.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r[1] == doctest::Approx(1.0));
}

TEST_CASE("classification and alpha") {
  GMPrior p;
  p.means = Eigen::MatrixXd::Zero(2, 1);
  p.means(1, 0) = 2;
  p.variances = Eigen::MatrixXd::Ones(2, 1);
  Eigen::VectorXd mid(1), near(1);
  mid << 1.0;
  near << 1.5;
  CHECK(classify(p, mid, 0.0).accepted);
  CHECK(classify(p, mid, 0.0).responsibility == doctest::Approx(0.5));
  CHECK_FALSE(classify(p, mid, 0.6).accepted);
  CHECK_FALSE(classify(p, mid, 0.6).component.has_value());
  const auto c = classify(p, near, 0.6);
  CHECK(c.accepted);
  CHECK(*c.component == 1);
  // Unit variances: log density ratio (1.5^2 - 0.5^2) / 2 = 1.
  CHECK(c.responsibility == doctest::Approx(1 / (1 + std::exp(-1.0))).epsilon(1e-12));
  CHECK_THROWS_AS(classify(p, near, 1.5), ConfigError);
  CHECK_THROWS_AS(classify(p, near, -0.1), ConfigError);
}

TEST_CASE("estimation matches sample statistics") {
  Rng rng = derive_rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Eigen::MatrixXd> codes;
  for (int c = 0; c < 4; ++c) codes.push_back(Eigen::MatrixXd::NullaryExpr(30, 3, [&] { return g(rng) + c; }));
  const auto p = estimate_prior(codes);
  for (int c = 0; c < 4; ++c) {
    const Eigen::RowVectorXd mean = codes[c].colwise().mean();
    const Eigen::RowVectorXd var = (codes[c].rowwise() - mean).array().square().colwise().sum() / 29.0;
    CHECK((p.means.row(c) - mean).norm() < 1e-12);
    CHECK((p.variances.row(c) - var).norm() < 1e-12);
    CHECK(p.support[static_cast<std::size_t>(c)] == 30);
  }
  // Identical codes collapse to the floor.
  std::vector<Eigen::MatrixXd> flat{Eigen::MatrixXd::Ones(5, 2)};
  const auto q = estimate_prior(flat, 1e-3);
  CHECK(q.variances.minCoeff() == doctest::Approx(1e-3));
  std::vector<Eigen::MatrixXd> single{Eigen::MatrixXd::Ones(1, 2)};
  CHECK(estimate_prior(single).variances.minCoeff() == doctest::Approx(kVarianceFloor));
  std::vector<Eigen::MatrixXd> empty{Eigen::MatrixXd(0, 2)};
  CHECK_THROWS(estimate_prior(empty));

  // Label form agrees with the grouped form.
  Eigen::MatrixXd stacked(120, 3);
  std::vector<std::size_t> labels;
  for (int c = 0; c < 4; ++c) {
    stacked.middleRows(c * 30, 30) = codes[c];
    labels.insert(labels.end(), 30, static_cast<std::size_t>(c));
  }
  const auto r = estimate_prior(stacked, labels, 4);
  CHECK((r.means - p.means).norm() < 1e-12);
  CHECK((r.variances - p.variances).norm() < 1e-12);
}

TEST_CASE("sampling moments") {
  GMPrior p;
  p.means = Eigen::MatrixXd(2, 2);
  p.means << 0, 0, 5, -3;
  p.variances = Eigen::MatrixXd(2, 2);
  p.variances << 1, 1, 0.25, 4;
  const auto s = sample_component(p, 1, 20000, 3);
  const Eigen::RowVectorXd mean = s.colwise().mean();
  CHECK(mean[0] == doctest::Approx(5).epsilon(0.01));
  CHECK(mean[1] == doctest::Approx(-3).epsilon(0.02));
  const Eigen::RowVectorXd var = (s.rowwise() - mean).array().square().colwise().mean();
  CHECK(var[0] == doctest::Approx(0.25).epsilon(0.05));
  CHECK(var[1] == doctest::Approx(4).epsilon(0.05));
  CHECK(sample_component(p, 1, 10, 3) == sample_component(p, 1, 10, 3));
  CHECK_THROWS(sample_component(p, 2, 1, 0));

  const auto w = warmup_sample(5000, 3, 4);
  CHECK(w.minCoeff() >= -1.0);
  CHECK(w.maxCoeff() <= 1.0);
  CHECK(std::abs(w.mean()) < 0.03);
}

TEST_CASE("row-wise forms agree with the single-code forms") {
  Rng rng = derive_rng(55);
  const auto p = random_prior(rng, 5, 3);
  const Eigen::MatrixXd codes = sample_component(p, 2, 7, 1);
  const auto logs = log_component_densities_rows(p, codes);
  const auto resp = responsibilities_rows(p, codes);
  for (Eigen::Index r = 0; r < codes.rows(); ++r) {
    const Eigen::VectorXd z = codes.row(r).transpose();
    CHECK((logs.row(r).transpose() - log_component_densities(p, z)).norm() < 1e-12);
    CHECK((resp.row(r).transpose() - responsibilities(p, z)).norm() < 1e-12);
  }
}
