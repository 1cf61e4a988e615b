// Acceptance gate: one PASS/FAIL line per criterion. `acceptance 3 7` runs a
// subset; with no arguments every criterion runs.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>

#include "support.hpp"
#include "wdis/checkpoint.hpp"
#include "wdis/evaluation.hpp"
#include "wdis/training.hpp"

using namespace wdis;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream o;
  o.precision(precision);
  o << v;
  return o.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("wdis_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// 1. Mixture log density against a brute-force sum in long double.
Verdict prior_oracle() {
  Rng rng = derive_rng(2024);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.05, 3.0);
  std::uniform_int_distribution<std::size_t> count(1, 40), dims(1, 16);
  double worst_density = 0, worst_sum = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    GMPrior p;
    const auto n = static_cast<Eigen::Index>(count(rng)), d = static_cast<Eigen::Index>(dims(rng));
    p.means = Eigen::MatrixXd::NullaryExpr(n, d, [&] { return 3.0 * g(rng); });
    p.variances = Eigen::MatrixXd::NullaryExpr(n, d, [&] { return u(rng); });
    Eigen::VectorXd z = p.means.row(trial % n).transpose();
    for (Eigen::Index j = 0; j < d; ++j) z[j] += 1.5 * g(rng);
    long double brute = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      long double prod = 1;
      for (Eigen::Index j = 0; j < d; ++j) {
        const long double v = p.variances(i, j), diff = z[j] - p.means(i, j);
        prod *= std::exp(-diff * diff / (2 * v)) / std::sqrt(2 * static_cast<long double>(M_PI) * v);
      }
      brute += prod;
    }
    const double expected = static_cast<double>(std::log(brute / static_cast<long double>(n)));
    const double rel = std::abs(mixture_log_density(p, z) - expected) / std::max(std::abs(expected), 1e-300);
    worst_density = std::max(worst_density, rel);
    worst_sum = std::max(worst_sum, std::abs(responsibilities(p, z).sum() - 1.0));
  }
  return {worst_density < 1e-9 && worst_sum < 1e-9,
          "max rel err " + fmt(worst_density) + ", max |sum r - 1| " + fmt(worst_sum)};
}

// 2. Central-difference checks on the three loss gradients.
Verdict gradient_check() {
  ArchConfig cfg;
  cfg.latent_dim = 4;
  cfg.height = cfg.width = 8;
  cfg.conv_channels = {4, 8};
  cfg.mlp_width = 32;
  cfg.mlp_depth = 2;
  cfg.relation_code_dim = 5;
  const Architecture arch(cfg);
  auto params = init_params<double>(arch, 77);
  Rng rng = derive_rng(78);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  const nn::Matrix<double> images = nn::Matrix<double>::NullaryExpr(4, 64, [&] { return u(rng); });

  auto enc = params.encoder.zeros_like(), dec = params.decoder.zeros_like();
  autoencoder_objective(arch, params, images, 1.0, &enc, &dec);
  auto ae = [&] {
    const auto t = autoencoder_objective<double>(arch, params, images, 1.0, nullptr, nullptr);
    return t.reconstruction + t.adversarial;
  };
  const double e_enc = testing::gradient_relative_error(params.encoder, enc, ae);
  const double e_dec = testing::gradient_relative_error(params.decoder, dec, ae);

  const nn::Matrix<double> encoded = nn::Matrix<double>::NullaryExpr(4, 4, [&] { return g(rng); });
  const nn::Matrix<double> prior = nn::Matrix<double>::NullaryExpr(4, 4, [&] { return 0.5 + g(rng); });
  auto disc = params.discriminator.zeros_like();
  discriminator_objective(arch, params, encoded, prior, &disc);
  const double e_disc = testing::gradient_relative_error(
      params.discriminator, disc, [&] { return -discriminator_objective<double>(arch, params, encoded, prior, nullptr); });

  GMPrior gm;
  gm.means = Eigen::MatrixXd::NullaryExpr(6, 4, [&] { return 2.0 * g(rng); });
  gm.variances = Eigen::MatrixXd::NullaryExpr(6, 4, [&] { return 0.3 + u(rng); });
  const nn::Matrix<double> inputs = nn::Matrix<double>::NullaryExpr(4, 4, [&] { return g(rng); });
  nn::Matrix<double> codes = nn::Matrix<double>::Zero(4, 5);
  for (int r = 0; r < 4; ++r) codes(r, r + 1) = 1;
  const std::vector<std::size_t> targets{1, 4, 0, 5};
  auto rel = params.relational.zeros_like();
  relational_objective(arch, params, gm, inputs, codes, targets, &rel);
  const double e_rel = testing::gradient_relative_error(params.relational, rel, [&] {
    return relational_objective<double>(arch, params, gm, inputs, codes, targets, nullptr);
  });
  const double worst = std::max({e_enc, e_dec, e_disc, e_rel});
  return {worst < 1e-4, "rel err encoder " + fmt(e_enc, 2) + ", decoder " + fmt(e_dec, 2) + ", discriminator " +
                            fmt(e_disc, 2) + ", relational " + fmt(e_rel, 2)};
}

// 3. Exhaustive relation algebra.
Verdict relation_algebra() {
  std::size_t checked = 0, failures = 0;
  auto expect = [&](bool ok) {
    ++checked;
    failures += !ok;
  };
  for (Preset preset : {Preset::HwfLike, Preset::Dsprites, Preset::Shapes3d}) {
    const auto space = build_factor_space(preset);
    const auto rels = builtin_relations(space, preset);
    for (const auto& rel : rels)
      for (const auto& in : rel.valid_inputs()) expect(apply_relation(rel, in) < space.num_combinations());
    auto find = [&](const std::string& name) -> const RelationDef* {
      for (const auto& r : rels)
        if (r.name == name) return &r;
      return nullptr;
    };
    const std::vector<std::pair<std::string, std::string>> inverses{
        {"move_left", "move_right"}, {"move_up", "move_down"}, {"+_hue", "-_hue"}, {"+_scale", "-_scale"}};
    for (const auto& [a, b] : inverses) {
      const RelationDef* f = find(a);
      const RelationDef* h = find(b);
      if (!f || !h) continue;
      for (const auto& [x, y] : {std::pair{f, h}, std::pair{h, f}})
        for (const auto& in : x->valid_inputs()) {
          const std::size_t mid = apply_relation(*x, in);
          const std::vector<std::size_t> next{mid};
          expect(y->is_valid(next) && apply_relation(*y, next) == in[0]);
        }
    }
    if (preset != Preset::HwfLike) continue;
    const std::vector<std::pair<std::string, std::function<int(int, int)>>> ops{
        {"sum", std::plus<int>()}, {"subtraction", std::minus<int>()}, {"multiplication", std::multiplies<int>()}};
    for (const auto& [name, op] : ops) {
      const RelationDef* rel = find(name);
      expect(rel != nullptr);
      if (!rel) continue;
      for (int a = 0; a <= 9; ++a)
        for (int b = 0; b <= 9; ++b) {
          const int r = op(a, b);
          const std::vector<std::size_t> in{static_cast<std::size_t>(a), static_cast<std::size_t>(b)};
          const bool defined = r >= 0 && r <= 9;
          expect(rel->is_valid(in) == defined);
          if (defined) expect(space.factor(0).values[apply_relation(*rel, in)] == std::to_string(r));
        }
    }
  }
  return {failures == 0 && checked > 0, std::to_string(checked) + " checks, " + std::to_string(failures) + " failures"};
}

// Synthetic 27-component prior in 8 dimensions with means at least 8 sigma apart.
GMPrior separated_prior(double sigma) {
  Rng rng = derive_rng(4040);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  GMPrior p;
  p.means = Eigen::MatrixXd::Zero(27, 8);
  p.variances = Eigen::MatrixXd::Constant(27, 8, sigma * sigma);
  for (Eigen::Index i = 0; i < 27; ++i) {
    for (;;) {
      for (Eigen::Index j = 0; j < 8; ++j) p.means(i, j) = u(rng);
      bool far = true;
      for (Eigen::Index k = 0; k < i && far; ++k) far = (p.means.row(i) - p.means.row(k)).norm() >= 8 * sigma;
      if (far) break;
    }
  }
  return p;
}

struct LatentRel {
  Architecture arch;
  GMPrior prior;
  NetworkParams<float> params;
  std::vector<RelationDef> relations;
};

LatentRel train_latent_rel(std::size_t steps) {
  const auto space = build_factor_space(Preset::Dsprites);
  auto relations = builtin_relations(space, Preset::Dsprites);
  ArchConfig cfg;
  cfg.height = cfg.width = 16;
  cfg.conv_channels = {4, 4};
  cfg.mlp_width = 256;
  cfg.mlp_depth = 2;
  fit_relations(cfg, relations);
  const Architecture arch(cfg);
  TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.batch_rel = 128;
  TrainState state = init_state(arch, 5);
  state.prior = separated_prior(0.1);
  for (std::size_t s = 0; s < steps; ++s) {
    Rng rng = derive_rng(6, {s});
    std::vector<RelationTuple> batch;
    for (std::size_t b = 0; b < tc.batch_rel; ++b)
      batch.push_back(make_relation_tuple(*state.prior, relations, cfg.relation_code_dim, rng));
    train_step_rel(arch, tc, state, batch);
  }
  return {arch, *state.prior, state.params, std::move(relations)};
}

// 4. ReL trained directly on codes of a frozen prior.
Verdict latent_rel() {
  const auto m = train_latent_rel(2000);
  RelationalEvalOptions opt;
  opt.depths = {1, 5};
  opt.alphas = {0.0};
  opt.trials = 10000;
  opt.relation_code_dim = m.arch.config.relation_code_dim;
  opt.seed = 11;
  const auto rows = relational_eval(m.prior, network_relational_map(m.arch, m.params), m.relations, opt);
  return {rows[0].accuracy >= 0.95 && rows[1].accuracy >= 0.90,
          "2000 steps; depth 1 acc " + fmt(rows[0].accuracy) + ", depth 5 acc " + fmt(rows[1].accuracy)};
}

// 5. Acceptance ratios over the standard alpha sweep.
Verdict alpha_sweep() {
  const std::vector<double> alphas{0.0, 0.1, 0.3, 0.5, 0.7, 0.9};
  bool ok = true;
  std::size_t sets = 0;
  auto check = [&](const std::vector<double>& ar) {
    ++sets;
    ok = ok && ar.front() == 1.0;
    for (std::size_t i = 1; i < ar.size(); ++i) ok = ok && ar[i] <= ar[i - 1];
  };
  // Codes drawn from a blurred copy of the prior, so rejections occur.
  for (double blur : {1.0, 3.0, 10.0}) {
    GMPrior p = separated_prior(0.1);
    Eigen::MatrixXd codes(27 * 100, 8);
    std::vector<std::size_t> labels;
    GMPrior wide = p;
    wide.variances *= blur * blur;
    for (std::size_t c = 0; c < 27; ++c) {
      codes.middleRows(static_cast<Eigen::Index>(c * 100), 100) = sample_component(wide, c, 100, c);
      labels.insert(labels.end(), 100, c);
    }
    std::vector<double> ar;
    for (const auto& r : cluster_eval(p, codes, labels, alphas, 30)) ar.push_back(r.acceptance_ratio);
    check(ar);
  }
  // Relational rollouts of a briefly trained learner.
  const auto m = train_latent_rel(100);
  RelationalEvalOptions opt;
  opt.depths = {1, 5, 10};
  opt.alphas = alphas;
  opt.trials = 2000;
  opt.relation_code_dim = m.arch.config.relation_code_dim;
  const auto rows = relational_eval(m.prior, network_relational_map(m.arch, m.params), m.relations, opt);
  double min_ar = 1;
  for (std::size_t d = 0; d < 3; ++d) {
    std::vector<double> ar;
    for (const auto& r : rows)
      if (r.depth == opt.depths[d]) ar.push_back(r.acceptance_ratio);
    min_ar = std::min(min_ar, ar.back());
    check(ar);
  }
  return {ok, std::to_string(sets) + " sweeps, AR 1.0 at alpha 0 and non-increasing; smallest AR " + fmt(min_ar)};
}

// 6. Desk-scale training run on rendered dsprites.
Verdict desk_end_to_end() {
  const auto space = build_factor_space(Preset::Dsprites);
  DatasetConfig dc;
  dc.preset = Preset::Dsprites;
  dc.image_size = 32;
  dc.samples_per_combination = 50;
  dc.seed = 1;
  const Dataset ds = make_dataset(space, dc);
  const auto relations = builtin_relations(space, Preset::Dsprites);
  const LabeledSubset labeled = label_subset(ds, 30, 1);
  ArchConfig cfg = default_arch(Preset::Dsprites);
  cfg.height = cfg.width = 32;
  cfg.conv_channels = {16, 32, 64};
  cfg.mlp_width = 256;
  fit_relations(cfg, relations);
  const Architecture arch(cfg);
  TrainConfig tc;
  tc.warmup_epochs = 300;
  tc.full_epochs = 700;
  tc.batch_absae = 64;
  tc.batch_rel = 128;
  tc.learning_rate = 1e-4;
  tc.seed = 1;
  TrainOptions options;
  options.on_epoch = [](const HistoryRow& r) {
    if (r.epoch % 100 == 0)
      std::cerr << "  [desk] epoch " << r.epoch << " " << r.phase << " ae " << r.loss_ae << " disc " << r.loss_disc
                << " rel " << r.loss_rel << '\n';
  };
  const auto result = run_training(arch, tc, ds, labeled, relations, options);
  const std::vector<double> alpha0{0.0};
  // Same protocol as `wdis eval`: the prior is re-estimated from the labeled
  // encodings of the final encoder.
  const GMPrior fresh = estimate_from_labeled(arch, result.state.params, ds, labeled, tc.variance_floor);
  const auto cluster = cluster_eval(arch, result.state.params, fresh, ds, ds.test, alpha0, 30);
  RelationalEvalOptions opt;
  opt.depths = {1};
  opt.alphas = alpha0;
  opt.trials = 10000;
  opt.relation_code_dim = cfg.relation_code_dim;
  opt.seed = 1;
  const auto rel = relational_eval(*result.state.prior, network_relational_map(arch, result.state.params), relations, opt);
  return {cluster[0].accuracy >= 0.75 && rel[0].accuracy >= 0.85,
          "latent classification acc " + fmt(cluster[0].accuracy) + " (>= 0.75), relational depth 1 acc " +
              fmt(rel[0].accuracy) + " (>= 0.85)"};
}

// 7. Metric oracles on an exhaustive grid of independent factors.
Verdict metric_oracles() {
  const std::vector<int> radices{3, 4, 5, 6};
  int n = 1;
  for (int r : radices) n *= r;
  const int copies = 10;
  Eigen::MatrixXi f(n * copies, static_cast<Eigen::Index>(radices.size()));
  for (int row = 0; row < f.rows(); ++row) {
    int rest = row % n;
    for (int k = static_cast<int>(radices.size()) - 1; k >= 0; --k) {
      f(row, k) = rest % radices[static_cast<std::size_t>(k)];
      rest /= radices[static_cast<std::size_t>(k)];
    }
  }
  // On a balanced grid a column of another factor predicts no better than
  // chance, so the best-minus-second normalized gap is exactly 1 per factor.
  const double sap_max = 1.0;
  const Eigen::MatrixXd perfect = f.cast<double>();
  const double m = mig(perfect, f), s = sap(perfect, f), d = dci(perfect, f);
  Rng rng = derive_rng(99);
  std::normal_distribution<double> g(0.0, 1.0);
  const Eigen::MatrixXd random = Eigen::MatrixXd::NullaryExpr(f.rows(), f.cols(), [&] { return g(rng); });
  const double rm = mig(random, f), rs = sap(random, f), rd = dci(random, f);
  const bool ok = m >= 0.95 && d >= 0.95 && std::abs(s - sap_max) <= 0.02 && rm <= 0.05 && rs <= 0.05 && rd <= 0.05;
  return {ok, "perfect MIG " + fmt(m) + " SAP " + fmt(s) + " DCI " + fmt(d) + "; random MIG " + fmt(rm) + " SAP " +
                  fmt(rs) + " DCI " + fmt(rd)};
}

// 8. Bit-exact dataset and checkpoint round trips, and resumed training.
Verdict persistence() {
  const fs::path dir = scratch("persistence");
  DatasetConfig dc;
  dc.preset = Preset::Dsprites;
  dc.samples_per_combination = 4;
  dc.image_size = 16;
  dc.seed = 8;
  const Dataset ds = make_dataset(build_factor_space(Preset::Dsprites), dc);
  save_native(ds, (dir / "a").string());
  const Dataset back = load_archive((dir / "a").string(), ArchiveFormat::Native);
  save_native(back, (dir / "b").string());
  bool data_ok = true;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) data_ok = data_ok && back.samples[i] == ds.samples[i];
  for (const char* file : {"images.bin", "labels.csv", "factors.txt"})
    data_ok = data_ok && slurp(dir / "a" / file) == slurp(dir / "b" / file);

  const auto relations = builtin_relations(ds.space, Preset::Dsprites);
  ArchConfig cfg;
  cfg.latent_dim = 4;
  cfg.height = cfg.width = 16;
  cfg.conv_channels = {8, 8};
  cfg.mlp_width = 32;
  cfg.mlp_depth = 1;
  fit_relations(cfg, relations);
  const Architecture arch(cfg);
  const LabeledSubset labeled = label_subset(ds, 2, 8);
  TrainConfig tc;
  tc.warmup_epochs = 3;
  tc.full_epochs = 4;
  tc.batch_absae = 32;
  tc.batch_rel = 16;
  tc.learning_rate = 1e-3;
  tc.refresh_every = 2;
  tc.seed = 8;

  TrainOptions straight;
  straight.checkpoint_path = (dir / "straight.wdck").string();
  const auto full = run_training(arch, tc, ds, labeled, relations, straight);
  const Checkpoint ck = read_checkpoint(straight.checkpoint_path);
  const std::string bytes = slurp(straight.checkpoint_path);
  const bool ckpt_ok = serialize_checkpoint(ck) == std::vector<unsigned char>(bytes.begin(), bytes.end()) &&
                       restore_state(arch, ck).params == full.state.params;

  TrainOptions part;
  part.checkpoint_path = (dir / "part.wdck").string();
  part.resume = true;
  for (std::size_t stop : {2, 5}) {
    part.stop_after = stop;
    run_training(arch, tc, ds, labeled, relations, part);
  }
  part.stop_after.reset();
  const auto resumed = run_training(arch, tc, ds, labeled, relations, part);
  const bool resume_ok = resumed.state.params == full.state.params && resumed.state.step == full.state.step &&
                         slurp(part.checkpoint_path) == slurp(straight.checkpoint_path);
  return {data_ok && ckpt_ok && resume_ok, std::string("dataset ") + (data_ok ? "exact" : "differs") +
                                               ", checkpoint " + (ckpt_ok ? "exact" : "differs") +
                                               ", resumed trajectory " + (resume_ok ? "identical" : "diverged")};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    std::string name;
    std::function<Verdict()> run;
    double limit_seconds;  // 0: no runtime bound
  };
  const std::vector<Criterion> criteria{{"prior density oracle", prior_oracle, 10},
                                        {"gradient verification", gradient_check, 120},
                                        {"relation algebra", relation_algebra, 5},
                                        {"latent-only relational learner", latent_rel, 300},
                                        {"alpha-sweep monotonicity", alpha_sweep, 0},
                                        {"desk-scale end to end", desk_end_to_end, 45 * 60},
                                        {"metric oracles", metric_oracles, 60},
                                        {"persistence", persistence, 0}};
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoul(argv[i]));
  bool all_pass = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.count(i + 1)) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double limit = criteria[i].limit_seconds;
    if (limit > 0 && seconds > limit) {
      v.pass = false;
      v.detail += "; over the " + fmt(limit) + " s budget";
    }
    all_pass = all_pass && v.pass;
    std::printf("criterion %zu %-32s %s  %s  [%.1f s]\n", i + 1, criteria[i].name.c_str(), v.pass ? "PASS" : "FAIL",
                v.detail.c_str(), seconds);
    std::fflush(stdout);
  }
  return all_pass ? 0 : 1;
}
