#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "wdis/checkpoint.hpp"
#include "wdis/error.hpp"
#include "wdis/training.hpp"

using namespace wdis;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("wdis_test_training_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct Fixture {
  Dataset dataset;
  std::vector<RelationDef> relations;
  Architecture arch;
  LabeledSubset labeled;
  TrainConfig config;

  Fixture()
      : dataset(make_dataset(build_factor_space(Preset::Dsprites), data_config())),
        relations(builtin_relations(dataset.space, Preset::Dsprites)),
        arch(arch_config(relations)),
        labeled(label_subset(dataset, 2, 1)) {
    config.warmup_epochs = 2;
    config.full_epochs = 3;
    config.batch_absae = 24;
    config.batch_rel = 8;
    config.learning_rate = 1e-3;
    config.refresh_every = 2;
    config.seed = 9;
  }

  static DatasetConfig data_config() {
    DatasetConfig c;
    c.preset = Preset::Dsprites;
    c.samples_per_combination = 6;
    c.image_size = 16;
    c.seed = 2;
    return c;
  }

  ArchConfig arch_config(const std::vector<RelationDef>& rels) {
    ArchConfig a;
    a.latent_dim = 4;
    a.height = a.width = 16;
    a.conv_channels = {4, 8};
    a.mlp_width = 16;
    a.mlp_depth = 1;
    fit_relations(a, rels);
    return a;
  }
};

GMPrior grid_prior(std::size_t n, std::size_t dim) {
  GMPrior p;
  p.means = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < p.means.rows(); ++i) p.means(i, i % p.means.cols()) = 10.0 * static_cast<double>(1 + i);
  p.variances = Eigen::MatrixXd::Constant(p.means.rows(), p.means.cols(), 0.5);
  return p;
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.learning_rate = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_absae = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  const auto reference = reference_train_config(Preset::Dsprites);
  CHECK(reference.warmup_epochs == 1000);
  CHECK(reference.full_epochs == 5000);
  CHECK(reference.learning_rate == 1e-4);
  CHECK(reference_train_config(Preset::Shapes3d).learning_rate == 1e-5);
}

TEST_CASE("relation tuples are consistent with the symbolic relation") {
  Fixture f;
  const GMPrior prior = grid_prior(27, 8);
  Rng rng = derive_rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto t = make_relation_tuple(prior, f.relations, 8, rng);
    const auto& rel = f.relations[t.relation];
    REQUIRE(rel.is_valid(t.sources));
    CHECK(apply_relation(rel, t.sources) == t.target);
    REQUIRE(t.input_codes.size() == 1);
    // Input codes are drawn from their source component.
    CHECK(classify(prior, t.input_codes[0], 0.0).component == t.sources[0]);
    CHECK(t.relation_code.size() == 8);
    CHECK(t.relation_code.sum() == 1.0);
    CHECK(t.relation_code[static_cast<Eigen::Index>(t.relation)] == 1.0);
  }
  const auto a = make_relation_tuple(prior, f.relations, 8, 77);
  const auto b = make_relation_tuple(prior, f.relations, 8, 77);
  CHECK(a.target == b.target);
  CHECK(a.input_codes[0] == b.input_codes[0]);
}

TEST_CASE("binary relation tuples use the operator component as relation code") {
  const auto space = build_factor_space(Preset::HwfLike);
  const auto rels = builtin_relations(space, Preset::HwfLike);
  const GMPrior prior = grid_prior(13, 4);
  Rng rng = derive_rng(4);
  for (int i = 0; i < 100; ++i) {
    const auto t = make_relation_tuple(prior, rels, 6, rng);
    REQUIRE(t.sources.size() == 2);
    REQUIRE(t.input_codes.size() == 2);
    CHECK(t.relation_code.size() == 6);
    const Eigen::VectorXd op = t.relation_code.head(4);
    CHECK(classify(prior, op, 0.0).component == rels[t.relation].operator_component);
    CHECK(t.relation_code.tail(2).isZero());
  }
}

TEST_CASE("relational step only moves relational parameters") {
  Fixture f;
  TrainState state = init_state(f.arch, 1);
  CHECK_THROWS_AS(train_step_rel(f.arch, f.config, state, {}), ConfigError);
  state.prior = grid_prior(27, 4);
  std::vector<RelationTuple> tuples;
  for (std::uint64_t s = 0; s < 8; ++s)
    tuples.push_back(make_relation_tuple(*state.prior, f.relations, f.arch.config.relation_code_dim, s));
  const auto before = state.params;
  const double loss = train_step_rel(f.arch, f.config, state, tuples);
  CHECK(std::isfinite(loss));
  CHECK(state.params.encoder == before.encoder);
  CHECK(state.params.decoder == before.decoder);
  CHECK(state.params.discriminator == before.discriminator);
  CHECK_FALSE(state.params.relational == before.relational);
}

TEST_CASE("absae step leaves the relational learner alone") {
  Fixture f;
  TrainState state = init_state(f.arch, 1);
  const auto before = state.params;
  Rng rng = derive_rng(2);
  std::vector<std::size_t> idx(24);
  std::iota(idx.begin(), idx.end(), 0);
  const auto losses = train_step_absae(f.arch, f.config, state, image_batch(f.dataset, idx), rng);
  CHECK(losses.reconstruction > 0);
  CHECK(losses.disc < 0);
  CHECK(state.params.relational == before.relational);
  CHECK_FALSE(state.params.encoder == before.encoder);
  CHECK_FALSE(state.params.discriminator == before.discriminator);
}

TEST_CASE("checkpoint container round trip and diagnostics") {
  Fixture f;
  const auto dir = scratch("ckpt");
  TrainState state = init_state(f.arch, 5);
  state.prior = estimate_from_labeled(f.arch, state.params, f.dataset, f.labeled, kVarianceFloor);
  state.epoch = 70000;  // beyond float integer precision
  state.step = (1ull << 40) + 3;
  const Checkpoint ck = make_checkpoint(f.arch, state, 12);
  const std::string path = (dir / "a.wdck").string();
  write_checkpoint(path, ck);
  CHECK_FALSE(fs::exists(path + ".partial"));
  const Checkpoint back = read_checkpoint(path);
  CHECK(back == ck);
  const TrainState restored = restore_state(f.arch, back);
  CHECK(restored.params == state.params);
  CHECK(restored.epoch == state.epoch);
  CHECK(restored.step == state.step);
  CHECK(restored.prior->means == state.prior->means);
  CHECK(serialize_checkpoint(back) == serialize_checkpoint(ck));
  CHECK(file_digest(path).size() == 64);
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");

  auto bytes = serialize_checkpoint(ck);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_WITH_AS(parse_checkpoint(bad), doctest::Contains("magic"), DataError);
  bad = bytes;
  bad[4] = 9;
  CHECK_THROWS_WITH_AS(parse_checkpoint(bad), doctest::Contains("version"), DataError);
  bad.assign(bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() / 2));
  CHECK_THROWS_AS(parse_checkpoint(bad), DataError);
  bad = bytes;
  bad.push_back(0);
  CHECK_THROWS_AS(parse_checkpoint(bad), DataError);

  ArchConfig other = f.arch.config;
  other.latent_dim = 5;
  CHECK_THROWS_AS(get_network(back, Architecture(other)), ConfigError);
}

TEST_CASE("history round trip") {
  const auto dir = scratch("history");
  std::vector<HistoryRow> rows{{1, "warmup", 0.5, -1.25, 0, -0.75}, {2, "full", 0.25, -1.5, 3.125, 1.875}};
  write_history((dir / "h.csv").string(), rows);
  const auto back = read_history((dir / "h.csv").string());
  REQUIRE(back.size() == 2);
  CHECK(back[1].phase == "full");
  CHECK(back[1].loss_rel == 3.125);
  CHECK(back[1].loss_total == 1.875);
}

TEST_CASE("training runs both phases and reports the total loss") {
  Fixture f;
  const auto result = run_training(f.arch, f.config, f.dataset, f.labeled, f.relations);
  REQUIRE(result.history.size() == 5);
  CHECK(result.history[0].phase == "warmup");
  CHECK(result.history[1].loss_rel == 0);
  CHECK(result.history[4].phase == "full");
  for (const auto& r : result.history)
    CHECK(r.loss_total == doctest::Approx(r.loss_ae + f.config.beta * r.loss_disc + f.config.gamma * r.loss_rel));
  CHECK(result.state.prior.has_value());
  CHECK(result.state.params.all_finite());
}

TEST_CASE("interrupted and resumed training reproduces the uninterrupted run") {
  Fixture f;
  const auto dir = scratch("resume");
  TrainOptions straight;
  straight.checkpoint_path = (dir / "straight.wdck").string();
  straight.history_path = (dir / "straight.csv").string();
  const auto full = run_training(f.arch, f.config, f.dataset, f.labeled, f.relations, straight);

  // Stop inside warmup, then inside the full phase, resuming each time.
  TrainOptions part;
  part.checkpoint_path = (dir / "part.wdck").string();
  part.history_path = (dir / "part.csv").string();
  part.resume = true;
  for (std::size_t stop : {1, 3}) {
    part.stop_after = stop;
    const auto r = run_training(f.arch, f.config, f.dataset, f.labeled, f.relations, part);
    CHECK(r.state.epoch == stop);
  }
  part.stop_after.reset();
  const auto resumed = run_training(f.arch, f.config, f.dataset, f.labeled, f.relations, part);
  CHECK(resumed.state.epoch == full.state.epoch);
  CHECK(resumed.state.step == full.state.step);
  CHECK(resumed.state.params == full.state.params);
  CHECK(resumed.state.prior->means == full.state.prior->means);
  CHECK(read_checkpoint(part.checkpoint_path) == read_checkpoint(straight.checkpoint_path));
  const auto h1 = read_history(straight.history_path);
  const auto h2 = read_history(part.history_path);
  REQUIRE(h1.size() == h2.size());
  for (std::size_t i = 0; i < h1.size(); ++i) CHECK(h1[i].loss_total == h2[i].loss_total);

  TrainConfig other = f.config;
  other.seed = 10;
  part.stop_after.reset();
  CHECK_THROWS_AS(run_training(f.arch, other, f.dataset, f.labeled, f.relations, part), ConfigError);
}
