#include "wdis/factors.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "wdis/error.hpp"

namespace wdis {

namespace {

constexpr std::string_view kFree = "*";

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.emplace_back(text.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::size_t parse_size(std::string_view text) {
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError("expected a non-negative integer, got '" + std::string(text) + "'");
  return value;
}

FactorSpec nuisance(std::string name) { return {std::move(name), {std::string(kFree)}, true}; }

std::optional<int> digit_value(std::string_view label) {
  if (label.size() == 1 && label[0] >= '0' && label[0] <= '9') return label[0] - '0';
  return std::nullopt;
}

}  // namespace

Preset parse_preset(std::string_view name) {
  if (name == "hwf-like" || name == "hwf") return Preset::HwfLike;
  if (name == "dsprites") return Preset::Dsprites;
  if (name == "shapes3d") return Preset::Shapes3d;
  if (name == "custom") return Preset::Custom;
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

std::string_view preset_name(Preset preset) {
  switch (preset) {
    case Preset::HwfLike: return "hwf-like";
    case Preset::Dsprites: return "dsprites";
    case Preset::Shapes3d: return "shapes3d";
    case Preset::Custom: return "custom";
  }
  return "custom";
}

std::optional<std::size_t> FactorSpec::value_index(std::string_view label) const {
  const auto it = std::find(values.begin(), values.end(), label);
  if (it == values.end()) return std::nullopt;
  return static_cast<std::size_t>(it - values.begin());
}

FactorSpace::FactorSpace(std::vector<FactorSpec> factors, Preset preset)
    : factors_(std::move(factors)), preset_(preset) {
  std::set<std::string> names;
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    const auto& f = factors_[i];
    if (f.name.empty()) throw ConfigError("factor with empty name");
    if (!names.insert(f.name).second) throw ConfigError("duplicate factor name '" + f.name + "'");
    if (f.values.empty()) throw ConfigError("factor '" + f.name + "' has no values");
    std::set<std::string> labels(f.values.begin(), f.values.end());
    if (labels.size() != f.values.size())
      throw ConfigError("factor '" + f.name + "' has duplicate value labels");
    if (!f.is_nuisance) {
      generative_.push_back(i);
      num_combinations_ *= f.values.size();
    }
  }
  if (generative_.empty()) throw ConfigError("factor space needs at least one non-nuisance factor");
}

std::vector<const FactorSpec*> FactorSpace::nuisance_factors() const {
  std::vector<const FactorSpec*> out;
  for (const auto& f : factors_)
    if (f.is_nuisance) out.push_back(&f);
  return out;
}

std::optional<std::size_t> FactorSpace::factor_position(std::string_view name) const {
  for (std::size_t k = 0; k < generative_.size(); ++k)
    if (factors_[generative_[k]].name == name) return k;
  return std::nullopt;
}

std::vector<std::size_t> FactorSpace::digits(std::size_t index) const {
  if (index >= num_combinations_)
    throw ConfigError("combination index " + std::to_string(index) + " out of range [0, " +
                      std::to_string(num_combinations_) + ")");
  std::vector<std::size_t> out(generative_.size());
  for (std::size_t k = generative_.size(); k-- > 0;) {
    const std::size_t radix = factor(k).values.size();
    out[k] = index % radix;
    index /= radix;
  }
  return out;
}

std::size_t FactorSpace::index_of_digits(std::span<const std::size_t> digits) const {
  if (digits.size() != generative_.size()) throw ConfigError("combination has wrong factor count");
  std::size_t index = 0;
  for (std::size_t k = 0; k < digits.size(); ++k) {
    const std::size_t radix = factor(k).values.size();
    if (digits[k] >= radix) throw ConfigError("factor value index out of range for '" + factor(k).name + "'");
    index = index * radix + digits[k];
  }
  return index;
}

FactorSpace build_factor_space(Preset preset) {
  switch (preset) {
    case Preset::HwfLike: {
      FactorSpec symbol{"symbol", {}, false};
      for (int d = 0; d <= 9; ++d) symbol.values.push_back(std::to_string(d));
      symbol.values.insert(symbol.values.end(), {"+", "-", "*"});
      return FactorSpace({symbol, nuisance("stroke_seed"), nuisance("thickness")}, preset);
    }
    case Preset::Dsprites:
      return FactorSpace({{"x_position", {"left", "center", "right"}, false},
                          {"y_position", {"up", "center", "down"}, false},
                          {"shape", {"ellipse", "square", "heart"}, false},
                          nuisance("scale"),
                          nuisance("orientation")},
                         preset);
    case Preset::Shapes3d: {
      FactorSpec color{"object_color", {}, false};
      for (int h = 0; h < 10; ++h) color.values.push_back("hue" + std::to_string(h));
      return FactorSpace({color,
                          {"shape", {"cube", "cylinder", "sphere", "ellipsoid"}, false},
                          {"scale", {"small", "medium", "big"}, false},
                          nuisance("floor_color"),
                          nuisance("background_color"),
                          nuisance("orientation")},
                         preset);
    }
    case Preset::Custom: break;
  }
  throw ConfigError("the custom preset needs an explicit factor list");
}

FactorSpace build_factor_space(std::string_view preset) { return build_factor_space(parse_preset(preset)); }

FactorSpace build_factor_space(std::vector<FactorSpec> custom) { return FactorSpace(std::move(custom)); }

std::size_t combination_to_index(const FactorSpace& space, const FactorCombination& combo) {
  if (combo.values.size() != space.num_factors())
    throw ConfigError("combination has " + std::to_string(combo.values.size()) + " values, expected " +
                      std::to_string(space.num_factors()));
  std::vector<std::size_t> digits(combo.values.size());
  for (std::size_t k = 0; k < digits.size(); ++k) {
    const auto idx = space.factor(k).value_index(combo.values[k]);
    if (!idx)
      throw ConfigError("unknown value '" + combo.values[k] + "' for factor '" + space.factor(k).name + "'");
    digits[k] = *idx;
  }
  return space.index_of_digits(digits);
}

FactorCombination index_to_combination(const FactorSpace& space, std::size_t index) {
  const auto digits = space.digits(index);
  FactorCombination combo;
  combo.index = index;
  for (std::size_t k = 0; k < digits.size(); ++k) combo.values.push_back(space.factor(k).values[digits[k]]);
  return combo;
}

FactorCombination make_combination(const FactorSpace& space, std::vector<std::string> values) {
  FactorCombination combo{std::move(values), 0};
  combo.index = combination_to_index(space, combo);
  return combo;
}

bool RelationDef::is_valid(std::span<const std::size_t> inputs) const {
  return table.contains(std::vector<std::size_t>(inputs.begin(), inputs.end()));
}

std::vector<std::vector<std::size_t>> RelationDef::valid_inputs() const {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(table.size());
  for (const auto& [key, _] : table) out.push_back(key);
  return out;
}

RelationDef relation_from_rule(const FactorSpace& space, std::string name, std::string rule) {
  RelationDef rel{std::move(name), 1, rule, {}, std::nullopt};
  const auto parts = split(rule, ':');
  const std::size_t n = space.num_combinations();

  if (parts[0] == "step" || parts[0] == "cycle") {
    if (parts.size() < 2) throw ConfigError("rule '" + rule + "' names no factor");
    const auto k = space.factor_position(parts[1]);
    if (!k) throw ConfigError("rule '" + rule + "' refers to unknown or nuisance factor '" + parts[1] + "'");
    const auto radix = static_cast<long>(space.factor(*k).values.size());
    long delta = 1;
    if (parts[0] == "step") {
      if (parts.size() != 3 || (parts[2] != "+1" && parts[2] != "-1"))
        throw ConfigError("step rule must end in :+1 or :-1, got '" + rule + "'");
      delta = parts[2] == "+1" ? 1 : -1;
    } else if (parts.size() != 2) {
      throw ConfigError("malformed cycle rule '" + rule + "'");
    }
    for (std::size_t i = 0; i < n; ++i) {
      auto digits = space.digits(i);
      long next = static_cast<long>(digits[*k]) + delta;
      if (parts[0] == "cycle") {
        next = ((next % radix) + radix) % radix;
      } else if (next < 0 || next >= radix) {
        continue;
      }
      digits[*k] = static_cast<std::size_t>(next);
      rel.table[{i}] = space.index_of_digits(digits);
    }
    return rel;
  }

  if (parts[0] == "arith") {
    if (parts.size() != 2 || (parts[1] != "+" && parts[1] != "-" && parts[1] != "*"))
      throw ConfigError("arith rule must be arith:+, arith:- or arith:*, got '" + rule + "'");
    if (space.num_factors() != 1) throw ConfigError("arith rules need a single symbol factor");
    const auto& symbol = space.factor(0);
    const auto op = symbol.value_index(parts[1]);
    if (!op) throw ConfigError("symbol factor has no operator value '" + parts[1] + "'");
    rel.arity = 2;
    rel.operator_component = *op;
    for (std::size_t i = 0; i < n; ++i) {
      const auto a = digit_value(symbol.values[i]);
      if (!a) continue;
      for (std::size_t j = 0; j < n; ++j) {
        const auto b = digit_value(symbol.values[j]);
        if (!b) continue;
        const int result = parts[1] == "+" ? *a + *b : parts[1] == "-" ? *a - *b : *a * *b;
        if (result < 0 || result > 9) continue;
        const auto out = symbol.value_index(std::to_string(result));
        if (out) rel.table[{i, j}] = *out;
      }
    }
    return rel;
  }
  throw ConfigError("unknown relation rule '" + rule + "'");
}

RelationDef relation_from_table(const FactorSpace& space, std::string name, std::size_t arity,
                                std::map<std::vector<std::size_t>, std::size_t> table) {
  if (arity == 0) throw ConfigError("relation '" + name + "' has arity 0");
  const std::size_t n = space.num_combinations();
  for (const auto& [key, out] : table) {
    if (key.size() != arity) throw ConfigError("relation '" + name + "' has an entry of the wrong arity");
    for (auto v : key)
      if (v >= n) throw ConfigError("relation '" + name + "' input index out of range");
    if (out >= n) throw ConfigError("relation '" + name + "' output index out of range");
  }
  return RelationDef{std::move(name), arity, "", std::move(table), std::nullopt};
}

std::vector<RelationDef> builtin_relations(const FactorSpace& space, Preset preset) {
  std::vector<std::pair<std::string, std::string>> rules;
  switch (preset) {
    case Preset::HwfLike:
      rules = {{"sum", "arith:+"}, {"subtraction", "arith:-"}, {"multiplication", "arith:*"}};
      break;
    case Preset::Dsprites:
      rules = {{"move_left", "step:x_position:-1"},
               {"move_right", "step:x_position:+1"},
               {"move_up", "step:y_position:-1"},
               {"move_down", "step:y_position:+1"},
               {"change_shape", "cycle:shape"}};
      break;
    case Preset::Shapes3d:
      rules = {{"+_hue", "step:object_color:+1"},
               {"-_hue", "step:object_color:-1"},
               {"change_shape", "cycle:shape"},
               {"+_scale", "step:scale:+1"},
               {"-_scale", "step:scale:-1"}};
      break;
    case Preset::Custom:
      throw ConfigError("the custom preset has no builtin relations");
  }
  std::vector<RelationDef> out;
  for (auto& [name, rule] : rules) out.push_back(relation_from_rule(space, name, rule));
  return out;
}

std::size_t apply_relation(const RelationDef& rel, std::span<const std::size_t> inputs) {
  const auto it = rel.table.find(std::vector<std::size_t>(inputs.begin(), inputs.end()));
  if (it == rel.table.end()) {
    std::string state;
    for (auto v : inputs) state += (state.empty() ? "" : ",") + std::to_string(v);
    throw ConfigError("invalid pre-state (" + state + ") for relation '" + rel.name + "'");
  }
  return it->second;
}

void write_spec(std::ostream& out, const FactorSpace& space, std::span<const RelationDef> relations) {
  out << "preset " << preset_name(space.preset()) << '\n';
  for (const auto& f : space.all_factors()) {
    out << "factor " << f.name << ' ';
    for (std::size_t i = 0; i < f.values.size(); ++i) out << (i ? "," : "") << f.values[i];
    if (f.is_nuisance) out << " nuisance";
    out << '\n';
  }
  for (const auto& rel : relations) {
    out << "relation " << rel.name << ' ' << rel.arity;
    if (!rel.rule.empty()) {
      out << " rule " << rel.rule << '\n';
      continue;
    }
    out << " table";
    for (const auto& [key, value] : rel.table) {
      out << ' ';
      for (std::size_t i = 0; i < key.size(); ++i) out << (i ? "," : "") << key[i];
      out << ':' << value;
    }
    out << '\n';
  }
}

FactorSpecFile read_spec(std::istream& in) {
  Preset preset = Preset::Custom;
  std::vector<FactorSpec> factors;
  std::vector<std::vector<std::string>> relation_lines;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream tokens(line);
    std::vector<std::string> words;
    for (std::string w; tokens >> w;) words.push_back(w);
    if (words.empty()) continue;
    const auto where = " (line " + std::to_string(line_no) + ")";
    if (words[0] == "preset") {
      if (words.size() != 2) throw ConfigError("malformed preset line" + where);
      preset = parse_preset(words[1]);
    } else if (words[0] == "factor") {
      if (words.size() < 3 || words.size() > 4 || (words.size() == 4 && words[3] != "nuisance"))
        throw ConfigError("malformed factor line" + where);
      factors.push_back({words[1], split(words[2], ','), words.size() == 4});
    } else if (words[0] == "relation") {
      if (words.size() < 4) throw ConfigError("malformed relation line" + where);
      relation_lines.push_back(std::move(words));
    } else {
      throw ConfigError("unknown directive '" + words[0] + "'" + where);
    }
  }
  FactorSpace space(std::move(factors), preset);
  std::vector<RelationDef> relations;
  for (const auto& words : relation_lines) {
    const std::size_t arity = parse_size(words[2]);
    if (words[3] == "rule") {
      if (words.size() != 5) throw ConfigError("relation '" + words[1] + "' rule line malformed");
      auto rel = relation_from_rule(space, words[1], words[4]);
      if (rel.arity != arity) throw ConfigError("relation '" + words[1] + "' arity disagrees with its rule");
      relations.push_back(std::move(rel));
    } else if (words[3] == "table") {
      std::map<std::vector<std::size_t>, std::size_t> table;
      for (std::size_t w = 4; w < words.size(); ++w) {
        const auto colon = words[w].find(':');
        if (colon == std::string::npos) throw ConfigError("relation table entry missing ':'");
        std::vector<std::size_t> key;
        for (const auto& part : split(std::string_view(words[w]).substr(0, colon), ','))
          key.push_back(parse_size(part));
        table[key] = parse_size(std::string_view(words[w]).substr(colon + 1));
      }
      relations.push_back(relation_from_table(space, words[1], arity, std::move(table)));
    } else {
      throw ConfigError("relation '" + words[1] + "' must use 'rule' or 'table'");
    }
  }
  return {std::move(space), std::move(relations)};
}

void write_spec_file(const std::string& path, const FactorSpace& space,
                     std::span<const RelationDef> relations) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write spec file '" + path + "'");
  write_spec(out, space, relations);
}

FactorSpecFile read_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open spec file '" + path + "'");
  return read_spec(in);
}

}  // namespace wdis
