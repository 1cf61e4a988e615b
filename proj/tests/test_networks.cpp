#include <doctest.h>

#include "support.hpp"
#include "wdis/error.hpp"
#include "wdis/networks.hpp"
#include "wdis/training.hpp"

using namespace wdis;

namespace {

ArchConfig tiny_arch() {
  ArchConfig a;
  a.latent_dim = 4;
  a.height = a.width = 8;
  a.channels = 1;
  a.conv_channels = {4, 6};
  a.mlp_width = 32;
  a.mlp_depth = 2;
  a.relation_code_dim = 5;
  a.relation_arity = 1;
  return a;
}

nn::Matrix<double> random_images(std::size_t n, std::size_t size, std::uint64_t seed) {
  Rng rng = derive_rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  nn::Matrix<double> x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(size));
  // Continuous pixels: an all-zero patch with zero bias sits on the LeakyReLU kink.
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 0.05 + 0.9 * u(rng);
  return x;
}

GMPrior spread_prior(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng = derive_rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  GMPrior p;
  p.means = Eigen::MatrixXd::NullaryExpr(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim),
                                         [&] { return 2.0 * g(rng); });
  p.variances = Eigen::MatrixXd::NullaryExpr(p.means.rows(), p.means.cols(), [&] { return 0.2 + 0.5 * std::abs(g(rng)); });
  return p;
}

}  // namespace

TEST_CASE("architecture validation") {
  ArchConfig a = tiny_arch();
  CHECK_NOTHROW(a.validate());
  a.height = 10;  // 10 -> 5 -> not halvable
  CHECK_THROWS_AS(a.validate(), ConfigError);
  a = tiny_arch();
  a.latent_dim = 0;
  CHECK_THROWS_AS(a.validate(), ConfigError);
  const auto reference = default_arch(Preset::Dsprites);
  CHECK(reference.latent_dim == 8);
  CHECK(reference.height == 64);
  CHECK(reference.relation_arity == 1);
  const auto hwf = default_arch(Preset::HwfLike);
  CHECK(hwf.relation_arity == 2);
  CHECK(default_arch(Preset::Shapes3d).channels == 3);
}

TEST_CASE("forward shapes and output ranges") {
  const Architecture arch(tiny_arch());
  const auto params = init_params<float>(arch, 3);
  const nn::Matrix<float> x = random_images(5, 64, 1).cast<float>();
  const auto z = encode(arch, params, x);
  CHECK(z.rows() == 5);
  CHECK(z.cols() == 4);
  const auto xh = decode(arch, params, z);
  CHECK(xh.rows() == 5);
  CHECK(xh.cols() == 64);
  CHECK(xh.minCoeff() > 0.0f);
  CHECK(xh.maxCoeff() < 1.0f);
  const auto d = discriminate(arch, params, z);
  CHECK(d.cols() == 1);
  nn::Matrix<float> far = nn::Matrix<float>::Constant(2, 4, 1e4f);
  const auto dfar = discriminate(arch, params, far);
  CHECK(dfar.minCoeff() >= static_cast<float>(kProbabilityClamp));
  CHECK(dfar.maxCoeff() <= static_cast<float>(1 - kProbabilityClamp));
  const nn::Matrix<float> codes = nn::Matrix<float>::Zero(5, 5);
  CHECK(relate(arch, params, z, codes).cols() == 4);
  CHECK_THROWS(encode(arch, params, nn::Matrix<float>(nn::Matrix<float>::Zero(2, 63))));
}

TEST_CASE("initialization is deterministic and seed dependent") {
  const Architecture arch(tiny_arch());
  CHECK(init_params<float>(arch, 5) == init_params<float>(arch, 5));
  CHECK_FALSE(init_params<float>(arch, 5) == init_params<float>(arch, 6));
  const auto p = init_params<double>(arch, 5);
  for (const auto& w : p.encoder) CHECK(w.value.cwiseAbs().maxCoeff() <= 0.99);
}

TEST_CASE("convolution matches a direct loop") {
  nn::Stack s(4 * 4 * 2);
  s.conv("c", 4, 4, 2, 3, 4, 2);
  auto params = nn::make_parameters<double>(s);
  Rng rng = derive_rng(9);
  nn::initialize(s, params, rng);
  params[1].value.setLinSpaced(0.1, 0.3);
  const nn::Matrix<double> x = random_images(2, 32, 4);
  const auto y = nn::forward(s, params, x);
  REQUIRE(y.cols() == 2 * 2 * 3);
  // Weight layout: (ky, kx, cin) rows by cout columns; padding 1.
  const auto& w = params[0].value;
  for (int n = 0; n < 2; ++n)
    for (int oy = 0; oy < 2; ++oy)
      for (int ox = 0; ox < 2; ++ox)
        for (int co = 0; co < 3; ++co) {
          double acc = params[1].value[co];
          for (int ky = 0; ky < 4; ++ky)
            for (int kx = 0; kx < 4; ++kx)
              for (int ci = 0; ci < 2; ++ci) {
                const int iy = oy * 2 + ky - 1, ix = ox * 2 + kx - 1;
                if (iy < 0 || iy >= 4 || ix < 0 || ix >= 4) continue;
                acc += x(n, (iy * 4 + ix) * 2 + ci) * w[((ky * 4 + kx) * 2 + ci) * 3 + co];
              }
          CHECK(y(n, (oy * 2 + ox) * 3 + co) == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("autoencoder gradients match finite differences") {
  const Architecture arch(tiny_arch());
  auto params = init_params<double>(arch, 21);
  const auto x = random_images(4, 64, 2);
  const double beta = 0.7;
  auto enc_grad = params.encoder.zeros_like();
  auto dec_grad = params.decoder.zeros_like();
  autoencoder_objective(arch, params, x, beta, &enc_grad, &dec_grad);
  auto f = [&] {
    const auto t = autoencoder_objective<double>(arch, params, x, beta, nullptr, nullptr);
    return t.reconstruction + beta * t.adversarial;
  };
  CHECK(testing::gradient_relative_error(params.encoder, enc_grad, f) < 1e-4);
  CHECK(testing::gradient_relative_error(params.decoder, dec_grad, f) < 1e-4);
}

TEST_CASE("squared error autoencoder gradients match finite differences") {
  ArchConfig cfg = tiny_arch();
  cfg.channels = 3;
  const Architecture arch(cfg);
  auto params = init_params<double>(arch, 22);
  const auto x = random_images(4, 192, 3);
  auto enc_grad = params.encoder.zeros_like();
  auto dec_grad = params.decoder.zeros_like();
  autoencoder_objective(arch, params, x, 1.0, &enc_grad, &dec_grad);
  auto f = [&] {
    const auto t = autoencoder_objective<double>(arch, params, x, 1.0, nullptr, nullptr);
    return t.reconstruction + t.adversarial;
  };
  CHECK(testing::gradient_relative_error(params.decoder, dec_grad, f) < 1e-4);
  CHECK(testing::gradient_relative_error(params.encoder, enc_grad, f) < 1e-4);
}

TEST_CASE("discriminator gradient matches finite differences") {
  const Architecture arch(tiny_arch());
  auto params = init_params<double>(arch, 23);
  Rng rng = derive_rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  nn::Matrix<double> enc = nn::Matrix<double>::NullaryExpr(4, 4, [&] { return g(rng); });
  nn::Matrix<double> pri = nn::Matrix<double>::NullaryExpr(4, 4, [&] { return 0.5 * g(rng) + 1.0; });
  auto grad = params.discriminator.zeros_like();
  discriminator_objective(arch, params, enc, pri, &grad);
  auto f = [&] { return -discriminator_objective<double>(arch, params, enc, pri, nullptr); };
  CHECK(testing::gradient_relative_error(params.discriminator, grad, f) < 1e-4);
}

TEST_CASE("relational gradient matches finite differences") {
  ArchConfig cfg = tiny_arch();
  cfg.relation_arity = 2;
  const Architecture arch(cfg);
  auto params = init_params<double>(arch, 24);
  const GMPrior prior = spread_prior(6, 4, 8);
  Rng rng = derive_rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  nn::Matrix<double> inputs = nn::Matrix<double>::NullaryExpr(4, 8, [&] { return g(rng); });
  nn::Matrix<double> codes = nn::Matrix<double>::Zero(4, 5);
  for (int r = 0; r < 4; ++r) codes(r, r) = 1;
  const std::vector<std::size_t> targets{0, 3, 5, 3};
  auto grad = params.relational.zeros_like();
  relational_objective(arch, params, prior, inputs, codes, targets, &grad);
  auto f = [&] { return relational_objective<double>(arch, params, prior, inputs, codes, targets, nullptr); };
  CHECK(testing::gradient_relative_error(params.relational, grad, f) < 1e-4);
}

TEST_CASE("loss functions against closed forms") {
  nn::Matrix<double> x(1, 3), xh(1, 3);
  x << 1, 0, 1;
  xh << 0.8, 0.3, 0.5;
  nn::Matrix<double> grad;
  const double bce = reconstruction_loss(x, xh, ReconstructionKind::Bernoulli, &grad);
  CHECK(bce == doctest::Approx(-(std::log(0.8) + std::log(0.7) + std::log(0.5)) / 3).epsilon(1e-12));
  CHECK(grad(0, 1) == doctest::Approx(1 / 0.7 / 3).epsilon(1e-12));
  const double mse = reconstruction_loss(x, xh, ReconstructionKind::SquaredError, &grad);
  CHECK(mse == doctest::Approx((0.04 + 0.09 + 0.25) / 3).epsilon(1e-12));
  CHECK(reconstruction_loss(x, x, ReconstructionKind::SquaredError) == 0.0);
  CHECK(reconstruction_kind(1) == ReconstructionKind::Bernoulli);
  CHECK(reconstruction_kind(3) == ReconstructionKind::SquaredError);

  const std::vector<double> dp{0.2, 0.4}, de{0.9, 0.6};
  const double j = discriminator_loss(dp, de);
  CHECK(j == doctest::Approx((std::log(0.9) + std::log(0.6)) / 2 + (std::log(0.8) + std::log(0.6)) / 2).epsilon(1e-12));
  // Optimal discriminator of identical distributions sits at d = 1/2.
  const std::vector<double> half{0.5, 0.5};
  CHECK(discriminator_loss(half, half) == doctest::Approx(-2 * std::log(2.0)).epsilon(1e-12));

  GMPrior p;
  p.means = Eigen::MatrixXd::Zero(2, 2);
  p.means.row(1) << 3, -1;
  p.variances = Eigen::MatrixXd::Ones(2, 2);
  p.variances.row(1) << 0.5, 2;
  nn::Vector<double> z(2), g;
  z << 2, 0;
  const double rl = relational_loss(p, z, 1, &g);
  const double expected = 0.5 * (1.0 / 0.5 + 1.0 / 2) + 0.5 * (std::log(2 * M_PI * 0.5) + std::log(2 * M_PI * 2));
  CHECK(rl == doctest::Approx(expected).epsilon(1e-12));
  CHECK(g[0] == doctest::Approx(-1.0 / 0.5));
  CHECK(g[1] == doctest::Approx(1.0 / 2));
}
