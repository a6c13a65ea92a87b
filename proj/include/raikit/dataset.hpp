#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace raikit {

enum class FeatureKind { Categorical, Numeric };

/// Declared feature: categorical features carry a value vocabulary,
/// numeric features may carry ascending bin edges (bin i covers
/// [edges[i], edges[i+1]), the last bin is closed on the right).
struct FeatureDecl {
  std::string name;
  FeatureKind kind = FeatureKind::Categorical;
  std::vector<std::string> vocabulary;  // categorical; empty = infer on load
  std::vector<double> bin_edges;        // numeric, optional

  std::size_t bin_count() const {
    return bin_edges.size() >= 2 ? bin_edges.size() - 1 : 0;
  }
};

using FeatureValue = std::variant<double, std::string>;

struct Example {
  std::vector<FeatureValue> values;  // aligned with Schema::features
  int label = 0;                     // in {0, 1}
  double weight = 1.0;               // >= 0
};

struct Schema {
  std::vector<FeatureDecl> features;
  std::string sensitive_feature;  // names a categorical feature
  std::string label_column = "label";
  std::optional<std::string> weight_column;

  int feature_index(const std::string& name) const;
  const FeatureDecl& feature(const std::string& name) const;  // throws
  int sensitive_index() const;

  static Schema from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Immutable ordered collection of examples conforming to a schema.
/// Order is part of the identity: all seeded sampling is stable.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Schema schema, std::vector<Example> examples);  // validates

  const Schema& schema() const { return schema_; }
  const std::vector<Example>& examples() const { return examples_; }
  std::size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }
  const Example& operator[](std::size_t i) const { return examples_[i]; }

  /// Sensitive attribute value of example i.
  const std::string& group(std::size_t i) const;
  /// Declared group set (vocabulary of the sensitive feature).
  const std::vector<std::string>& groups() const;
  int label(std::size_t i) const { return examples_[i].label; }
  double weight(std::size_t i) const { return examples_[i].weight; }

  double numeric(std::size_t i, int feature) const;
  const std::string& categorical(std::size_t i, int feature) const;

  /// Same schema, different rows (validated).
  Dataset with_examples(std::vector<Example> ex) const;

 private:
  Schema schema_;
  std::vector<Example> examples_;
};

/// One conjunct of a slice predicate; the value is a categorical token
/// or a bin index for binned numeric features.
struct SliceLiteral {
  std::string feature;
  std::variant<std::string, int> value;

  bool operator==(const SliceLiteral&) const = default;
};

struct SlicePredicate {
  std::vector<SliceLiteral> literals;  // conjunctive, at most one per feature

  bool matches(const Dataset& d, std::size_t i) const;
  std::string to_string(const Schema& schema) const;
  void validate(const Schema& schema) const;  // throws on unknown feature etc.

  bool operator==(const SlicePredicate&) const = default;
};

struct Slice {
  SlicePredicate predicate;
  std::vector<std::size_t> members;

  std::size_t size() const { return members.size(); }
};

/// Bin index of x under the feature's declared edges, -1 if outside.
int bin_index(const FeatureDecl& f, double x);

/// Splits d into (slice, complement); together they partition the index set.
std::pair<Slice, Slice> apply_slice(const Dataset& d, const SlicePredicate& p);

// ---- CSV / schema IO -------------------------------------------------------

Schema load_schema(const std::string& path);
void save_schema(const Schema& schema, const std::string& path);

/// Loads a UTF-8 comma-separated file with a header row. Columns are
/// matched by name; a missing weight column defaults every weight to 1.0.
/// Malformed rows (wrong arity, unparseable numeric, label outside {0,1})
/// are rejected with the offending row number.
Dataset load_csv(const std::string& path, const Schema& schema);

/// Writes the dataset back to CSV, always including the weight column.
void write_csv(const Dataset& d, const std::string& path);

// ---- Synthetic generation --------------------------------------------------

/// Gaussian feature distribution of one (group, label) cell.
struct SyntheticCell {
  std::vector<double> means;  // one per feature; single entry broadcasts
  double spread = 1.0;
};

struct SyntheticSpec {
  std::vector<std::string> groups;
  std::vector<std::size_t> group_sizes;
  std::vector<double> positive_rates;  // P(Y=1 | Z=z), per group
  std::size_t feature_count = 2;
  std::vector<std::array<SyntheticCell, 2>> cells;  // [group][label]
  std::string sensitive_name = "group";
  std::vector<double> bin_edges;  // optional, applied to every feature

  static SyntheticSpec from_json(const nlohmann::json& j);
};

/// Deterministic for a fixed seed; group sizes are exact, label rates
/// are sampled per example.
Dataset gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// ---- Label-flip poisoning --------------------------------------------------

enum class PoisonStrategy { Uniform, TargetedGroup };

struct PoisonResult {
  Dataset poisoned;
  std::vector<std::size_t> flip_mask;  // sorted indices of flipped labels
};

/// Flips exactly floor(rate * pool size) labels, where the pool is the
/// whole dataset (Uniform) or one group's members (TargetedGroup).
/// Everything but the flipped labels is preserved.
PoisonResult poison_label_flip(const Dataset& d, double rate,
                               std::uint64_t seed,
                               PoisonStrategy strategy = PoisonStrategy::Uniform,
                               const std::string& target_group = "");

// ---- Worked-example fixtures ----------------------------------------------

/// Ten-person threshold-classifier demo: feature X = 1..10, two races,
/// negatives at positions 1-4.
Dataset make_fig2_fixture();

/// Same data with the labels at positions 5 and 7 flipped to negative.
Dataset make_poisoned_fig2_fixture();

/// Six-row cleaning demo (Name, Gender, Age, Label; sensitive Gender):
/// two near-duplicate rows and one anomalous age.
Dataset make_table1_fixture();

}  // namespace raikit
