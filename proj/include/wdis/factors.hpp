#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wdis {

enum class Preset { HwfLike, Dsprites, Shapes3d, Custom };

Preset parse_preset(std::string_view name);
std::string_view preset_name(Preset preset);

// A labeled attribute of the data. Nuisance factors are recorded but do not
// contribute prior components.
struct FactorSpec {
  std::string name;
  std::vector<std::string> values;
  bool is_nuisance = false;

  std::optional<std::size_t> value_index(std::string_view label) const;
};

struct FactorCombination {
  std::vector<std::string> values;  // one label per non-nuisance factor
  std::size_t index = 0;

  bool operator==(const FactorCombination&) const = default;
};

// Ordered factor grammar. Combination indices are lexicographic mixed-radix
// over the declared order of the non-nuisance factors (first factor is the
// most significant digit).
class FactorSpace {
 public:
  FactorSpace(std::vector<FactorSpec> factors, Preset preset = Preset::Custom);

  Preset preset() const { return preset_; }
  const std::vector<FactorSpec>& all_factors() const { return factors_; }

  // K: number of non-nuisance factors, N: number of combinations.
  std::size_t num_factors() const { return generative_.size(); }
  std::size_t num_combinations() const { return num_combinations_; }

  const FactorSpec& factor(std::size_t k) const { return factors_[generative_[k]]; }
  std::vector<const FactorSpec*> nuisance_factors() const;
  std::optional<std::size_t> factor_position(std::string_view name) const;

  std::vector<std::size_t> digits(std::size_t index) const;
  std::size_t index_of_digits(std::span<const std::size_t> digits) const;

 private:
  std::vector<FactorSpec> factors_;
  std::vector<std::size_t> generative_;
  std::size_t num_combinations_ = 1;
  Preset preset_;
};

FactorSpace build_factor_space(Preset preset);
FactorSpace build_factor_space(std::string_view preset);
FactorSpace build_factor_space(std::vector<FactorSpec> custom);

std::size_t combination_to_index(const FactorSpace& space, const FactorCombination& combo);
FactorCombination index_to_combination(const FactorSpace& space, std::size_t index);
FactorCombination make_combination(const FactorSpace& space, std::vector<std::string> values);

// A relation of arity R, stored as an explicit transition table whose keys
// are exactly the valid input tuples.
struct RelationDef {
  std::string name;
  std::size_t arity = 1;
  std::string rule;  // empty when defined by table only
  std::map<std::vector<std::size_t>, std::size_t> table;
  // Component whose codes identify the relation (binary arithmetic on the
  // glyph preset); absent for relations identified by a one-hot code.
  std::optional<std::size_t> operator_component;

  bool is_valid(std::span<const std::size_t> inputs) const;
  std::vector<std::vector<std::size_t>> valid_inputs() const;
};

// Rules:
//   step:<factor>:+1 | step:<factor>:-1   ordinal move, boundaries excluded
//   cycle:<factor>                         advance with wraparound
//   arith:+ | arith:- | arith:*            digit arithmetic, result must be a digit
RelationDef relation_from_rule(const FactorSpace& space, std::string name, std::string rule);
RelationDef relation_from_table(const FactorSpace& space, std::string name, std::size_t arity,
                                std::map<std::vector<std::size_t>, std::size_t> table);

std::vector<RelationDef> builtin_relations(const FactorSpace& space, Preset preset);

std::size_t apply_relation(const RelationDef& rel, std::span<const std::size_t> inputs);

// Human-readable spec file: one factor per line, one relation per line.
//   preset dsprites
//   factor x_position left,center,right
//   factor scale * nuisance
//   relation move_left 1 rule step:x_position:-1
//   relation swap 1 table 0:1 1:0
struct FactorSpecFile {
  FactorSpace space;
  std::vector<RelationDef> relations;
};

void write_spec(std::ostream& out, const FactorSpace& space, std::span<const RelationDef> relations);
FactorSpecFile read_spec(std::istream& in);
void write_spec_file(const std::string& path, const FactorSpace& space,
                     std::span<const RelationDef> relations);
FactorSpecFile read_spec_file(const std::string& path);

}  // namespace wdis
