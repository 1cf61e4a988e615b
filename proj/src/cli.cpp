#include "wdis/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "wdis/checkpoint.hpp"
#include "wdis/config.hpp"
#include "wdis/error.hpp"
#include "wdis/evaluation.hpp"
#include "wdis/image_io.hpp"
#include "wdis/training.hpp"

namespace wdis {

namespace {

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

RunConfig resolve_config(const GlobalFlags& flags, std::optional<std::string> preset = std::nullopt) {
  ConfigOverrides overrides{std::move(preset), flags.seed, flags.out};
  return flags.config.empty() ? parse_run_config("", overrides) : load_run_config(flags.config, overrides);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) parts.push_back(item);
  return parts;
}

std::string describe(const FactorSpace& space, std::size_t index) {
  const auto combo = index_to_combination(space, index);
  std::string s = "(";
  for (std::size_t k = 0; k < combo.values.size(); ++k) s += (k ? "," : "") + combo.values[k];
  return s + ")";
}

// Dataset plus the relations declared next to it (builtin ones when absent).
struct LoadedData {
  Dataset dataset;
  std::vector<RelationDef> relations;
};

LoadedData load_dataset(const RunConfig& config) {
  const std::string dir = config.dataset_dir();
  LoadedData d{load_archive(dir, ArchiveFormat::Native), {}};
  d.relations = read_spec_file(dir + "/factors.txt").relations;
  if (d.relations.empty() && d.dataset.space.preset() != Preset::Custom)
    d.relations = builtin_relations(d.dataset.space, d.dataset.space.preset());
  return d;
}

// Architecture for a run: configured geometry checked against the data, and
// relation settings fitted to the dataset's relation set.
ArchConfig run_arch(const RunConfig& config, const LoadedData& data) {
  ArchConfig arch = config.arch;
  const auto& ds = data.dataset;
  if (ds.height() != arch.height || ds.width() != arch.width || ds.channels() != arch.channels)
    throw ConfigError("dataset images are " + std::to_string(ds.height()) + "x" + std::to_string(ds.width()) + "x" +
                      std::to_string(ds.channels()) + " but the configuration expects " + std::to_string(arch.height) +
                      "x" + std::to_string(arch.width) + "x" + std::to_string(arch.channels));
  fit_relations(arch, data.relations);
  return arch;
}

int cmd_generate(const GlobalFlags& flags, const std::optional<std::string>& preset, std::ostream& out) {
  const RunConfig config = resolve_config(flags, preset);
  const ArchiveOptions options{config.archive_max_samples, config.data.image_size, config.seed};
  const Dataset ds = config.archive.empty() ? make_dataset(build_factor_space(config.data.preset), config.data)
                                            : load_archive(config.archive, config.archive_format, options);
  const std::string dir = config.dataset_dir();
  save_native(ds, dir);
  out << "wrote " << ds.samples.size() << " samples (" << ds.space.num_combinations() << " combinations; train "
      << ds.train.size() << ", validation " << ds.validation.size() << ", test " << ds.test.size() << ") to " << dir
      << '\n';
  return 0;
}

int cmd_train(const GlobalFlags& flags, bool resume, std::ostream& out) {
  const RunConfig config = resolve_config(flags);
  const LoadedData data = load_dataset(config);
  const Architecture arch(run_arch(config, data));
  const LabeledSubset labeled = label_subset(data.dataset, config.tau, config.seed);
  std::filesystem::create_directories(config.out);

  TrainOptions options;
  options.checkpoint_path = config.checkpoint_path();
  options.history_path = config.history_path();
  options.resume = resume;
  const std::size_t total = config.train.total_epochs();
  options.on_epoch = [&](const HistoryRow& row) {
    out << "epoch " << row.epoch << '/' << total << " [" << row.phase << "] ae=" << row.loss_ae
        << " disc=" << row.loss_disc << " rel=" << row.loss_rel << " total=" << row.loss_total << '\n'
        << std::flush;
  };
  if (resume && std::filesystem::exists(options.checkpoint_path))
    out << "resuming from " << options.checkpoint_path << '\n';
  const auto result = run_training(arch, config.train, data.dataset, labeled, data.relations, options);
  out << "trained " << result.state.epoch << " epochs; checkpoint " << options.checkpoint_path << '\n';
  return 0;
}

int cmd_eval(const GlobalFlags& flags, std::string checkpoint_path, const std::string& which, std::ostream& out) {
  const RunConfig config = resolve_config(flags);
  const bool all = which == "all";
  const bool do_cluster = all || which == "cluster";
  const bool do_relations = all || which == "relations";
  const bool do_metrics = all || which == "disentangle" || which == "recon";
  if (!do_cluster && !do_relations && !do_metrics)
    throw ConfigError("unknown evaluation '" + which + "' (cluster, relations, disentangle, recon, all)");
  if (checkpoint_path.empty()) checkpoint_path = config.checkpoint_path();

  const Checkpoint checkpoint = read_checkpoint(checkpoint_path);
  const LoadedData data = load_dataset(config);
  const Architecture arch(run_arch(config, data));
  if (!(checkpoint.arch == arch.config))
    throw ConfigError("checkpoint '" + checkpoint_path + "' was written for a different architecture");
  const NetworkParams<float> params = get_network(checkpoint, arch);
  if (!has_prior(checkpoint)) throw DataError("checkpoint has no prior (training stopped during warmup)");
  const GMPrior prior = get_prior(checkpoint);
  const auto& ds = data.dataset;
  const std::string name(preset_name(ds.space.preset()));
  std::filesystem::create_directories(config.out);
  out << std::fixed << std::setprecision(4);

  if (do_cluster) {
    std::vector<ClusterEvalRow> rows;
    for (std::size_t tau : config.eval.taus) {
      LabeledSubset labeled;
      try {
        labeled = label_subset(ds, tau, config.seed);
      } catch (const DataError& e) {
        out << "skipping tau=" << tau << ": " << e.what() << '\n';
        continue;
      }
      const GMPrior tau_prior = estimate_from_labeled(arch, params, ds, labeled, config.train.variance_floor);
      const auto part = cluster_eval(arch, params, tau_prior, ds, ds.test, config.eval.alphas, tau);
      rows.insert(rows.end(), part.begin(), part.end());
    }
    write_cluster_csv(config.out + "/cluster_eval.csv", name, rows);
    out << "latent classification (" << ds.test.size() << " test samples)\n  tau  alpha     acc      ar\n";
    for (const auto& r : rows)
      out << std::setw(5) << r.tau << std::setw(7) << std::setprecision(1) << r.alpha << std::setprecision(4)
          << std::setw(8) << r.accuracy << std::setw(8) << r.acceptance_ratio << '\n';
  }
  if (do_relations) {
    RelationalEvalOptions options;
    options.depths = config.eval.depths;
    options.alphas = config.eval.alphas;
    options.trials = config.eval.trials;
    options.relation_code_dim = arch.config.relation_code_dim;
    options.seed = config.seed;
    const auto rows = relational_eval(prior, network_relational_map(arch, params), data.relations, options);
    write_relational_csv(config.out + "/relational_eval.csv", name, rows);
    out << "relational accuracy (" << config.eval.trials << " trials)\n  depth  alpha     acc      ar\n";
    for (const auto& r : rows)
      out << std::setw(7) << r.depth << std::setw(7) << std::setprecision(1) << r.alpha << std::setprecision(4)
          << std::setw(8) << r.accuracy << std::setw(8) << r.acceptance_ratio << '\n';
  }
  if (do_metrics) {
    MetricReport report;
    std::vector<std::size_t> labels;
    for (auto s : ds.test) labels.push_back(ds.samples[s].combination_index.value());
    Eigen::MatrixXd codes(static_cast<Eigen::Index>(ds.test.size()), static_cast<Eigen::Index>(arch.config.latent_dim));
    for (std::size_t i = 0; i < ds.test.size(); ++i) {
      const std::size_t idx[] = {ds.test[i]};
      codes.row(static_cast<Eigen::Index>(i)) = encode(arch, params, image_batch(ds, idx)).cast<double>();
    }
    const Eigen::MatrixXi truth = factor_matrix(ds.space, labels);
    const Eigen::MatrixXd decoded = factor_decode(prior, ds.space, codes).cast<double>();
    const auto scores = dci_scores(decoded, truth);
    report.dci = scores.average();
    report.dci_disentanglement = scores.disentanglement;
    report.dci_completeness = scores.completeness;
    report.dci_informativeness = scores.informativeness;
    report.mig = mig(decoded, truth);
    report.sap = sap(decoded, truth);
    report.reconstruction_error = reconstruction_error(arch, params, ds, ds.test);
    const RunMetadata meta{name, config.seed, sha256_hex(canonical_text(config)), file_digest(checkpoint_path)};
    write_metrics_json(config.out + "/metrics.json", report, meta);
    out << "DCI " << report.dci << "  MIG " << report.mig << "  SAP " << report.sap << "  reconstruction "
        << report.reconstruction_error << '\n';
  }
  return 0;
}

int cmd_sample(const GlobalFlags& flags, std::string checkpoint_path, const std::string& chain_text,
               const std::string& start_text, std::string output, std::ostream& out) {
  const RunConfig config = resolve_config(flags);
  if (checkpoint_path.empty()) checkpoint_path = config.checkpoint_path();
  const LoadedData data = load_dataset(config);
  const auto& space = data.dataset.space;
  const std::size_t start = make_combination(space, split(start_text, ',')).index;

  // Each step is "relation" or, for binary relations, "relation:operand"
  // with the operand given as a value label.
  struct Step {
    std::size_t relation;
    std::vector<std::size_t> extra;
  };
  std::vector<Step> steps;
  std::size_t state = start;
  std::size_t position = 0;
  for (const auto& item : split(chain_text, ',')) {
    ++position;
    const auto parts = split(item, ':');
    const auto it = std::find_if(data.relations.begin(), data.relations.end(),
                                 [&](const RelationDef& r) { return !parts.empty() && r.name == parts[0]; });
    if (it == data.relations.end()) throw ConfigError("step " + std::to_string(position) + ": unknown relation '" + item + "'");
    Step step{static_cast<std::size_t>(it - data.relations.begin()), {}};
    for (std::size_t p = 1; p < parts.size(); ++p) step.extra.push_back(make_combination(space, {parts[p]}).index);
    std::vector<std::size_t> inputs{state};
    inputs.insert(inputs.end(), step.extra.begin(), step.extra.end());
    if (inputs.size() != it->arity || !it->is_valid(inputs))
      throw ConfigError("step " + std::to_string(position) + " (" + it->name + ") is invalid from " +
                        describe(space, state));
    state = apply_relation(*it, inputs);
    steps.push_back(std::move(step));
  }

  const Checkpoint checkpoint = read_checkpoint(checkpoint_path);
  const Architecture arch(run_arch(config, data));
  if (!(checkpoint.arch == arch.config))
    throw ConfigError("checkpoint '" + checkpoint_path + "' was written for a different architecture");
  const NetworkParams<float> params = get_network(checkpoint, arch);
  if (!has_prior(checkpoint)) throw DataError("checkpoint has no prior (training stopped during warmup)");
  const GMPrior prior = get_prior(checkpoint);
  const std::size_t n_z = arch.config.latent_dim;

  auto mean_of = [&](std::size_t component) {
    return nn::Vector<float>(prior.means.row(static_cast<Eigen::Index>(component)).transpose().cast<float>());
  };
  std::vector<nn::Vector<float>> codes{mean_of(start)};
  for (const auto& step : steps) {
    const auto& rel = data.relations[step.relation];
    std::vector<nn::Vector<float>> inputs{codes.back()};
    for (auto e : step.extra) inputs.push_back(mean_of(e));
    nn::Vector<float> code = nn::Vector<float>::Zero(static_cast<Eigen::Index>(arch.config.relation_code_dim));
    if (rel.operator_component)
      code.head(static_cast<Eigen::Index>(n_z)) = mean_of(*rel.operator_component);
    else
      code[static_cast<Eigen::Index>(step.relation)] = 1.0f;
    codes.push_back(relate<float>(arch, params, inputs, code));
  }
  std::vector<ImageSample> frames;
  for (const auto& z : codes) {
    const nn::Matrix<float> decoded = decode(arch, params, nn::Matrix<float>(z.transpose()));
    ImageSample img;
    img.height = arch.config.height;
    img.width = arch.config.width;
    img.channels = arch.config.channels;
    img.pixels.assign(decoded.data(), decoded.data() + decoded.size());
    frames.push_back(std::move(img));
  }
  if (output.empty()) output = config.out + (arch.config.channels == 1 ? "/sample.pgm" : "/sample.ppm");
  std::filesystem::create_directories(std::filesystem::path(output).parent_path().empty()
                                          ? std::filesystem::path(".")
                                          : std::filesystem::path(output).parent_path());
  write_pnm(output, hstack(frames));
  out << "wrote " << frames.size() << "-image strip to " << output << " (final state " << describe(space, state) << ")\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Weakly disentangled representation learning"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalFlags flags;
  app.add_option("--config", flags.config, "INI configuration file");
  app.add_option("--seed", flags.seed, "Seed overriding the configuration");
  app.add_option("--out", flags.out, "Output directory");

  auto* generate = app.add_subcommand("generate", "Render or ingest a dataset into the native layout");
  std::optional<std::string> preset;
  generate->add_option("--preset", preset, "hwf-like, dsprites or shapes3d");

  auto* train = app.add_subcommand("train", "Run warmup and full training");
  bool resume = false;
  train->add_flag("--resume", resume, "Continue from the existing checkpoint");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string checkpoint, which = "all";
  eval->add_option("--checkpoint", checkpoint, "Checkpoint path (default <out>/checkpoint.wdck)");
  eval->add_option("--which", which, "cluster, relations, disentangle, recon or all");

  auto* sample = app.add_subcommand("sample", "Decode a chain of relations into an image strip");
  std::string chain, start, output;
  sample->add_option("--checkpoint", checkpoint, "Checkpoint path (default <out>/checkpoint.wdck)");
  sample->add_option("--chain", chain, "Comma-separated relations, binary ones as name:operand");
  sample->add_option("--start", start, "Start combination as comma-separated value labels")->required();
  sample->add_option("--output", output, "Image path (PGM/PPM)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*generate) return cmd_generate(flags, preset, out);
    if (*train) return cmd_train(flags, resume, out);
    if (*eval) return cmd_eval(flags, checkpoint, which, out);
    if (*sample) return cmd_sample(flags, checkpoint, chain, start, output, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return 3;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace wdis
