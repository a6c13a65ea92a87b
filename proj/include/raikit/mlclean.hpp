#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "raikit/dataset.hpp"

namespace raikit {

/// Single-link clustering over a feature distance: numeric features
/// contribute |dx| normalized by the observed range, categorical features
/// contribute 1 per mismatch.
struct ClusterRule {
  std::vector<std::string> features;
  double threshold = 0.1;
};

/// Anomaly detection inside each cluster: declared valid ranges and/or a
/// robust z-score bound (median/MAD, 0 disables).
struct AnomalyRule {
  std::map<std::string, std::pair<double, double>> valid_ranges;
  double z_bound = 0.0;
  std::vector<std::string> z_features;
};

/// Entity-resolution match rule: names within the normalized edit
/// distance threshold, required fields equal, and equal labels
/// (conflicting labels block the merge and are reported).
struct MatchRule {
  std::string name_feature;
  double max_distance = 0.5;
  std::vector<std::string> require_equal;
};

struct CleanConfig {
  ClusterRule cluster;
  AnomalyRule anomaly;
  MatchRule match;

  static CleanConfig from_json(const nlohmann::json& j);
  /// Rules used by the six-row demo fixture (range Age in [0,130]).
  static CleanConfig table1_defaults();
};

struct DropRecord {
  std::size_t index;
  std::string reason;
};

struct MergeRecord {
  std::vector<std::size_t> inputs;  // original indices
  double weight;                    // summed
};

struct BlockedMergeRecord {
  std::size_t a, b;
  std::string reason;
};

struct ReweighFactor {
  std::string group;
  int label;
  double factor;
};

/// Complete audit of every mutation the pipeline performed.
struct CleaningReport {
  std::vector<std::vector<std::size_t>> clusters;
  std::vector<DropRecord> dropped;
  std::vector<MergeRecord> merges;
  std::vector<BlockedMergeRecord> blocked;
  std::vector<ReweighFactor> factors;
  std::map<std::string, double> rate_before;  // weighted positive rates
  std::map<std::string, double> rate_after;
  std::optional<std::string> previous_model;  // accepted, recorded, unused

  nlohmann::json to_json() const;
};

/// Levenshtein distance divided by the longer length; case-insensitive.
double normalized_edit_distance(std::string_view a, std::string_view b);

/// Joint sanitization + cleaning: cluster, drop anomalies within each
/// cluster, then entity-resolve within each cluster (never across).
/// Merged examples keep the lexicographically-least name, the mode of
/// categorical fields, the weighted mean of numeric fields, and the
/// summed weight.
std::pair<Dataset, CleaningReport> sanitize_and_clean(const Dataset& d,
                                                      const CleanConfig& cfg);

/// Rescales each (group, label) cell so both groups end with the same
/// weighted positive rate (the dataset's unweighted label prior); total
/// weight is preserved. Requires exactly two groups and throws, naming
/// the cell, when a globally-present label is missing from one group.
std::pair<Dataset, std::vector<ReweighFactor>> reweigh_for_dp(const Dataset& d);

/// Fixed order: sanitize_and_clean, then reweigh_for_dp. The report
/// covers both stages.
std::pair<Dataset, CleaningReport> mlclean_pipeline(
    const Dataset& d, const CleanConfig& cfg,
    const std::optional<std::string>& previous_model = std::nullopt);

}  // namespace raikit
