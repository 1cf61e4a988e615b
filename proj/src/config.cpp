#include "wdis/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "wdis/error.hpp"

namespace wdis {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  const auto e = s.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& raw) {
  const std::string text = trim(raw);
  T value{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size() || text.empty())
    throw ConfigError("config key '" + key + "' has malformed value '" + raw + "'");
  return value;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& raw) {
  std::vector<T> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, item));
  if (out.empty()) throw ConfigError("config key '" + key + "' needs at least one value");
  return out;
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::ostringstream out;
  for (std::size_t i = 0; i < values.size(); ++i) out << (i ? "," : "") << values[i];
  return out.str();
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["seed"] = [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); };
    t["data.samples_per_combination"] = [](RunConfig& c, const std::string& v) {
      c.data.samples_per_combination = parse_number<std::size_t>("data.samples_per_combination", v);
    };
    t["data.image_size"] = [](RunConfig& c, const std::string& v) {
      c.data.image_size = parse_number<std::size_t>("data.image_size", v);
    };
    t["data.noise"] = [](RunConfig& c, const std::string& v) { c.data.noise.kind = parse_noise_kind(trim(v)); };
    t["data.noise_level"] = [](RunConfig& c, const std::string& v) {
      c.data.noise.level = parse_number<double>("data.noise_level", v);
    };
    t["data.tau"] = [](RunConfig& c, const std::string& v) { c.tau = parse_number<std::size_t>("data.tau", v); };
    t["data.dir"] = [](RunConfig& c, const std::string& v) { c.data_dir = trim(v); };
    t["data.archive"] = [](RunConfig& c, const std::string& v) { c.archive = trim(v); };
    t["data.archive_format"] = [](RunConfig& c, const std::string& v) {
      c.archive_format = parse_archive_format(trim(v));
    };
    t["data.max_samples"] = [](RunConfig& c, const std::string& v) {
      c.archive_max_samples = parse_number<std::size_t>("data.max_samples", v);
    };
    t["arch.latent_dim"] = [](RunConfig& c, const std::string& v) {
      c.arch.latent_dim = parse_number<std::size_t>("arch.latent_dim", v);
    };
    t["arch.conv_channels"] = [](RunConfig& c, const std::string& v) {
      c.arch.conv_channels = parse_list<std::size_t>("arch.conv_channels", v);
    };
    t["arch.kernel"] = [](RunConfig& c, const std::string& v) {
      c.arch.kernel = parse_number<std::size_t>("arch.kernel", v);
    };
    t["arch.stride"] = [](RunConfig& c, const std::string& v) {
      c.arch.stride = parse_number<std::size_t>("arch.stride", v);
    };
    t["arch.mlp_width"] = [](RunConfig& c, const std::string& v) {
      c.arch.mlp_width = parse_number<std::size_t>("arch.mlp_width", v);
    };
    t["arch.mlp_depth"] = [](RunConfig& c, const std::string& v) {
      c.arch.mlp_depth = parse_number<std::size_t>("arch.mlp_depth", v);
    };
    t["train.beta"] = [](RunConfig& c, const std::string& v) { c.train.beta = parse_number<double>("train.beta", v); };
    t["train.gamma"] = [](RunConfig& c, const std::string& v) {
      c.train.gamma = parse_number<double>("train.gamma", v);
    };
    t["train.warmup_epochs"] = [](RunConfig& c, const std::string& v) {
      c.train.warmup_epochs = parse_number<std::size_t>("train.warmup_epochs", v);
    };
    t["train.full_epochs"] = [](RunConfig& c, const std::string& v) {
      c.train.full_epochs = parse_number<std::size_t>("train.full_epochs", v);
    };
    t["train.batch_absae"] = [](RunConfig& c, const std::string& v) {
      c.train.batch_absae = parse_number<std::size_t>("train.batch_absae", v);
    };
    t["train.batch_rel"] = [](RunConfig& c, const std::string& v) {
      c.train.batch_rel = parse_number<std::size_t>("train.batch_rel", v);
    };
    t["train.learning_rate"] = [](RunConfig& c, const std::string& v) {
      c.train.learning_rate = parse_number<double>("train.learning_rate", v);
    };
    t["train.refresh_every"] = [](RunConfig& c, const std::string& v) {
      c.train.refresh_every = parse_number<std::size_t>("train.refresh_every", v);
    };
    t["train.checkpoint_every"] = [](RunConfig& c, const std::string& v) {
      c.train.checkpoint_every = parse_number<std::size_t>("train.checkpoint_every", v);
    };
    t["train.variance_floor"] = [](RunConfig& c, const std::string& v) {
      c.train.variance_floor = parse_number<double>("train.variance_floor", v);
    };
    t["eval.alphas"] = [](RunConfig& c, const std::string& v) { c.eval.alphas = parse_list<double>("eval.alphas", v); };
    t["eval.depths"] = [](RunConfig& c, const std::string& v) {
      c.eval.depths = parse_list<std::size_t>("eval.depths", v);
    };
    t["eval.taus"] = [](RunConfig& c, const std::string& v) { c.eval.taus = parse_list<std::size_t>("eval.taus", v); };
    t["eval.trials"] = [](RunConfig& c, const std::string& v) {
      c.eval.trials = parse_number<std::size_t>("eval.trials", v);
    };
    return t;
  }();
  return table;
}

}  // namespace

RunConfig default_run_config(Preset preset) {
  RunConfig c;
  c.data.preset = preset;
  c.arch = default_arch(preset);
  c.train = reference_train_config(preset);
  if (preset == Preset::Shapes3d) c.eval.trials = 5000;
  finalize(c);
  return c;
}

void finalize(RunConfig& c) {
  c.data.seed = c.seed;
  c.train.seed = c.seed;
  c.arch.height = c.arch.width = c.data.image_size;
  c.arch.channels = c.data.preset == Preset::Shapes3d ? 3 : 1;
  if (c.data.preset != Preset::Custom) {
    const auto space = build_factor_space(c.data.preset);
    const auto relations = builtin_relations(space, c.data.preset);
    fit_relations(c.arch, relations);
  }
  c.arch.validate();
  c.train.validate();
  for (double a : c.eval.alphas)
    if (!(a >= 0 && a <= 1)) throw ConfigError("eval.alphas entries must lie in [0, 1]");
  for (auto d : c.eval.depths)
    if (d < 1) throw ConfigError("eval.depths entries must be at least 1");
  if (c.tau < 1) throw ConfigError("data.tau must be at least 1");
}

RunConfig parse_run_config(const std::string& text, const ConfigOverrides& overrides) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  // Flatten to dotted keys first so the preset can seed the defaults.
  std::map<std::string, std::string> entries;
  for (const auto& [key, node] : tree) {
    if (node.empty()) {
      entries[key] = node.data();
      continue;
    }
    for (const auto& [sub, leaf] : node) {
      if (!leaf.empty()) throw ConfigError("config section '" + key + "' nests too deeply");
      entries[key + "." + sub] = leaf.data();
    }
  }
  Preset preset = Preset::Dsprites;
  if (auto it = entries.find("preset"); it != entries.end()) {
    try {
      preset = parse_preset(trim(it->second));
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    entries.erase(it);
  }
  if (overrides.preset) preset = parse_preset(*overrides.preset);
  RunConfig config = default_run_config(preset);
  for (const auto& [key, value] : entries) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
    try {
      it->second(config, value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
  if (overrides.seed) config.seed = *overrides.seed;
  if (overrides.out) config.out = *overrides.out;
  finalize(config);
  return config;
}

RunConfig load_run_config(const std::string& path, const ConfigOverrides& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str(), overrides);
}

std::string canonical_text(const RunConfig& c) {
  std::ostringstream o;
  o << "seed=" << c.seed << '\n'
    << "preset=" << preset_name(c.data.preset) << '\n'
    << "data.samples_per_combination=" << c.data.samples_per_combination << '\n'
    << "data.image_size=" << c.data.image_size << '\n'
    << "data.noise=" << noise_kind_name(c.data.noise.kind) << '\n'
    << "data.noise_level=" << format_double(c.data.noise.level) << '\n'
    << "data.tau=" << c.tau << '\n'
    << "data.archive=" << c.archive << '\n'
    << "data.max_samples=" << c.archive_max_samples << '\n'
    << "arch.latent_dim=" << c.arch.latent_dim << '\n'
    << "arch.image=" << c.arch.height << 'x' << c.arch.width << 'x' << c.arch.channels << '\n'
    << "arch.conv_channels=" << join(c.arch.conv_channels) << '\n'
    << "arch.kernel=" << c.arch.kernel << '\n'
    << "arch.stride=" << c.arch.stride << '\n'
    << "arch.mlp_width=" << c.arch.mlp_width << '\n'
    << "arch.mlp_depth=" << c.arch.mlp_depth << '\n'
    << "arch.relation_code_dim=" << c.arch.relation_code_dim << '\n'
    << "arch.relation_arity=" << c.arch.relation_arity << '\n'
    << "train.beta=" << format_double(c.train.beta) << '\n'
    << "train.gamma=" << format_double(c.train.gamma) << '\n'
    << "train.warmup_epochs=" << c.train.warmup_epochs << '\n'
    << "train.full_epochs=" << c.train.full_epochs << '\n'
    << "train.batch_absae=" << c.train.batch_absae << '\n'
    << "train.batch_rel=" << c.train.batch_rel << '\n'
    << "train.learning_rate=" << format_double(c.train.learning_rate) << '\n'
    << "train.refresh_every=" << c.train.refresh_every << '\n'
    << "train.variance_floor=" << format_double(c.train.variance_floor) << '\n';
  std::vector<std::string> alphas;
  for (double a : c.eval.alphas) alphas.push_back(format_double(a));
  o << "eval.alphas=" << join(alphas) << '\n'
    << "eval.depths=" << join(c.eval.depths) << '\n'
    << "eval.taus=" << join(c.eval.taus) << '\n'
    << "eval.trials=" << c.eval.trials << '\n';
  return o.str();
}

}  // namespace wdis
