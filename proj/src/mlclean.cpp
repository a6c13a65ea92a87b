#include "raikit/mlclean.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "raikit/metrics.hpp"

namespace raikit {

using nlohmann::json;

// ---- Config --------------------------------------------------------------------

CleanConfig CleanConfig::from_json(const json& j) {
  CleanConfig cfg;
  if (j.contains("cluster")) {
    const auto& c = j.at("cluster");
    cfg.cluster.features = c.value("features", std::vector<std::string>{});
    cfg.cluster.threshold = c.value("threshold", 0.1);
  }
  if (j.contains("anomaly")) {
    const auto& a = j.at("anomaly");
    if (a.contains("valid_ranges")) {
      for (const auto& [feature, range] : a.at("valid_ranges").items())
        cfg.anomaly.valid_ranges[feature] = {range.at(0).get<double>(),
                                             range.at(1).get<double>()};
    }
    cfg.anomaly.z_bound = a.value("z_bound", 0.0);
    cfg.anomaly.z_features = a.value("z_features", std::vector<std::string>{});
  }
  if (j.contains("match")) {
    const auto& m = j.at("match");
    cfg.match.name_feature = m.value("name_feature", std::string{});
    cfg.match.max_distance = m.value("max_distance", 0.5);
    cfg.match.require_equal =
        m.value("require_equal", std::vector<std::string>{});
  }
  return cfg;
}

CleanConfig CleanConfig::table1_defaults() {
  CleanConfig cfg;
  cfg.cluster.features = {"Gender", "Age"};
  cfg.cluster.threshold = 0.1;
  cfg.anomaly.valid_ranges["Age"] = {0.0, 130.0};
  cfg.match.name_feature = "Name";
  cfg.match.max_distance = 0.5;
  cfg.match.require_equal = {"Gender"};
  return cfg;
}

// ---- Edit distance ----------------------------------------------------------------

double normalized_edit_distance(std::string_view a, std::string_view b) {
  const auto lower = [](std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return out;
  };
  const std::string x = lower(a), y = lower(b);
  if (x.empty() && y.empty()) return 0.0;
  std::vector<std::size_t> prev(y.size() + 1), cur(y.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= x.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= y.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[y.size()]) /
         static_cast<double>(std::max(x.size(), y.size()));
}

// ---- Sanitize + clean ---------------------------------------------------------------

namespace {

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), std::size_t{0});
  }
  std::size_t find(std::size_t i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

std::string value_to_string(const FeatureValue& v) {
  if (const auto* tok = std::get_if<std::string>(&v)) return *tok;
  return std::to_string(std::get<double>(v));
}

}  // namespace

std::pair<Dataset, CleaningReport> sanitize_and_clean(const Dataset& d,
                                                      const CleanConfig& cfg) {
  CleaningReport report;
  const Schema& schema = d.schema();
  const std::size_t n = d.size();
  if (n == 0) return {d, report};

  // feature ranges for normalized numeric distances
  std::map<int, std::pair<double, double>> ranges;
  std::vector<int> cluster_features;
  for (const auto& name : cfg.cluster.features) {
    const int f = schema.feature_index(name);
    if (f < 0) throw std::invalid_argument("unknown cluster feature: " + name);
    cluster_features.push_back(f);
    if (schema.features[f].kind == FeatureKind::Numeric) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (std::size_t i = 0; i < n; ++i) {
        lo = std::min(lo, d.numeric(i, f));
        hi = std::max(hi, d.numeric(i, f));
      }
      ranges[f] = {lo, hi};
    }
  }

  const auto distance = [&](std::size_t i, std::size_t j) {
    double dist = 0.0;
    for (int f : cluster_features) {
      if (schema.features[f].kind == FeatureKind::Numeric) {
        const auto [lo, hi] = ranges.at(f);
        const double span = hi - lo;
        if (span > 0.0)
          dist += std::abs(d.numeric(i, f) - d.numeric(j, f)) / span;
      } else {
        dist += d.categorical(i, f) != d.categorical(j, f) ? 1.0 : 0.0;
      }
    }
    return dist;
  };

  // single-link clustering = connected components of the threshold graph
  UnionFind uf(n);
  if (!cluster_features.empty()) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (distance(i, j) <= cfg.cluster.threshold) uf.unite(i, j);
  }
  std::map<std::size_t, std::vector<std::size_t>> cluster_map;
  for (std::size_t i = 0; i < n; ++i) cluster_map[uf.find(i)].push_back(i);
  for (const auto& [root, members] : cluster_map)
    report.clusters.push_back(members);

  // anomaly rules within each cluster
  std::vector<bool> dropped(n, false);
  for (const auto& members : report.clusters) {
    for (std::size_t i : members) {
      for (const auto& [feature, range] : cfg.anomaly.valid_ranges) {
        const int f = schema.feature_index(feature);
        if (f < 0)
          throw std::invalid_argument("unknown anomaly feature: " + feature);
        const double x = d.numeric(i, f);
        if (x < range.first || x > range.second) {
          dropped[i] = true;
          report.dropped.push_back(
              {i, feature + "=" + std::to_string(x) + " outside [" +
                      std::to_string(range.first) + "," +
                      std::to_string(range.second) + "]"});
          break;
        }
      }
    }
    if (cfg.anomaly.z_bound > 0.0) {
      for (const auto& feature : cfg.anomaly.z_features) {
        const int f = schema.feature_index(feature);
        if (f < 0)
          throw std::invalid_argument("unknown anomaly feature: " + feature);
        std::vector<double> xs;
        for (std::size_t i : members)
          if (!dropped[i]) xs.push_back(d.numeric(i, f));
        if (xs.size() < 3) continue;
        std::vector<double> sorted = xs;
        std::sort(sorted.begin(), sorted.end());
        const double median = sorted[sorted.size() / 2];
        std::vector<double> devs;
        for (double x : sorted) devs.push_back(std::abs(x - median));
        std::sort(devs.begin(), devs.end());
        const double mad = devs[devs.size() / 2];
        if (mad <= 0.0) continue;
        for (std::size_t i : members) {
          if (dropped[i]) continue;
          const double z = std::abs(d.numeric(i, f) - median) / (1.4826 * mad);
          if (z > cfg.anomaly.z_bound) {
            dropped[i] = true;
            report.dropped.push_back(
                {i, feature + " robust z-score " + std::to_string(z) +
                        " exceeds " + std::to_string(cfg.anomaly.z_bound)});
          }
        }
      }
    }
  }

  // entity resolution within clusters, never across
  const int name_f = cfg.match.name_feature.empty()
                         ? -1
                         : schema.feature_index(cfg.match.name_feature);
  if (!cfg.match.name_feature.empty() && name_f < 0)
    throw std::invalid_argument("unknown match feature: " +
                                cfg.match.name_feature);
  UnionFind merge_uf(n);
  if (name_f >= 0) {
    for (const auto& members : report.clusters) {
      for (std::size_t a = 0; a < members.size(); ++a) {
        for (std::size_t b = a + 1; b < members.size(); ++b) {
          const std::size_t i = members[a], j = members[b];
          if (dropped[i] || dropped[j]) continue;
          if (normalized_edit_distance(d.categorical(i, name_f),
                                       d.categorical(j, name_f)) >
              cfg.match.max_distance)
            continue;
          bool fields_equal = true;
          for (const auto& feature : cfg.match.require_equal) {
            const int f = schema.feature_index(feature);
            if (f < 0)
              throw std::invalid_argument("unknown match field: " + feature);
            if (value_to_string(d[i].values[f]) !=
                value_to_string(d[j].values[f])) {
              fields_equal = false;
              break;
            }
          }
          if (!fields_equal) continue;
          if (d.label(i) != d.label(j)) {
            report.blocked.push_back({i, j, "conflicting labels"});
            continue;
          }
          merge_uf.unite(i, j);
        }
      }
    }
  }

  std::map<std::size_t, std::vector<std::size_t>> merge_groups;
  for (std::size_t i = 0; i < n; ++i)
    if (!dropped[i]) merge_groups[merge_uf.find(i)].push_back(i);

  std::vector<Example> out_rows;
  for (const auto& [root, members] : merge_groups) {
    if (members.size() == 1) {
      out_rows.push_back(d[members[0]]);
      continue;
    }
    // survivorship: least name, categorical mode, weighted numeric mean
    Example merged = d[members[0]];
    merged.weight = 0.0;
    for (std::size_t i : members) merged.weight += d.weight(i);
    for (std::size_t f = 0; f < schema.features.size(); ++f) {
      if (schema.features[f].kind == FeatureKind::Numeric) {
        double wsum = 0.0, vsum = 0.0;
        for (std::size_t i : members) {
          wsum += d.weight(i);
          vsum += d.weight(i) * d.numeric(i, static_cast<int>(f));
        }
        merged.values[f] = wsum > 0.0 ? vsum / wsum : d.numeric(members[0], f);
      } else if (static_cast<int>(f) == name_f) {
        std::string least = d.categorical(members[0], name_f);
        for (std::size_t i : members)
          least = std::min(least, d.categorical(i, name_f));
        merged.values[f] = least;
      } else {
        std::map<std::string, std::size_t> counts;
        for (std::size_t i : members)
          counts[d.categorical(i, static_cast<int>(f))] += 1;
        std::string mode = counts.begin()->first;
        std::size_t best = 0;
        for (const auto& [tok, c] : counts) {
          if (c > best) {
            best = c;
            mode = tok;
          }
        }
        merged.values[f] = mode;
      }
    }
    report.merges.push_back({members, merged.weight});
    out_rows.push_back(std::move(merged));
  }

  return {d.with_examples(std::move(out_rows)), std::move(report)};
}

// ---- Reweighing -----------------------------------------------------------------------

std::pair<Dataset, std::vector<ReweighFactor>> reweigh_for_dp(const Dataset& d) {
  const auto& groups = d.groups();
  if (groups.size() != 2)
    throw std::invalid_argument("reweighing needs exactly two groups");

  double cell_weight[2][2] = {{0, 0}, {0, 0}};
  std::size_t label_count[2] = {0, 0};
  double total = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::size_t z = d.group(i) == groups[0] ? 0 : 1;
    cell_weight[z][d.label(i)] += d.weight(i);
    label_count[d.label(i)] += 1;
    total += d.weight(i);
  }
  for (std::size_t z = 0; z < 2; ++z) {
    if (cell_weight[z][0] + cell_weight[z][1] <= 0.0)
      throw std::invalid_argument("group " + groups[z] + " has zero weight");
  }

  // target cell mass: half the total weight per group, split by the
  // unweighted label prior; yields equal weighted positive rates.
  const double n_total = static_cast<double>(d.size());
  double factor[2][2] = {{1, 1}, {1, 1}};
  std::vector<ReweighFactor> factors;
  for (std::size_t z = 0; z < 2; ++z) {
    for (int y = 0; y < 2; ++y) {
      if (label_count[y] == 0) continue;  // label absent globally
      if (cell_weight[z][y] <= 0.0)
        throw std::invalid_argument("cannot reweigh: cell (" + groups[z] + "," +
                                    std::to_string(y) +
                                    ") is empty while label " +
                                    std::to_string(y) + " exists globally");
      const double prior = static_cast<double>(label_count[y]) / n_total;
      factor[z][y] = total * prior / (2.0 * cell_weight[z][y]);
      factors.push_back({groups[z], y, factor[z][y]});
    }
  }

  std::vector<Example> rows = d.examples();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t z = d.group(i) == groups[0] ? 0 : 1;
    rows[i].weight *= factor[z][rows[i].label];
  }
  return {d.with_examples(std::move(rows)), std::move(factors)};
}

// ---- Pipeline ---------------------------------------------------------------------------

std::pair<Dataset, CleaningReport> mlclean_pipeline(
    const Dataset& d, const CleanConfig& cfg,
    const std::optional<std::string>& previous_model) {
  auto [cleaned, report] = sanitize_and_clean(d, cfg);
  report.previous_model = previous_model;
  for (const auto& g : cleaned.groups()) {
    try {
      report.rate_before[g] = weighted_positive_rate(cleaned, g);
    } catch (const std::invalid_argument&) {
      // group emptied by cleaning; reweighing will reject it below
    }
  }
  auto [reweighed, factors] = reweigh_for_dp(cleaned);
  report.factors = std::move(factors);
  for (const auto& g : reweighed.groups())
    report.rate_after[g] = weighted_positive_rate(reweighed, g);
  return {std::move(reweighed), std::move(report)};
}

json CleaningReport::to_json() const {
  json j;
  j["clusters"] = clusters;
  json dropped_j = json::array();
  for (const auto& r : dropped)
    dropped_j.push_back({{"index", r.index}, {"reason", r.reason}});
  j["dropped"] = dropped_j;
  json merges_j = json::array();
  for (const auto& m : merges)
    merges_j.push_back({{"inputs", m.inputs}, {"weight", m.weight}});
  j["merges"] = merges_j;
  json blocked_j = json::array();
  for (const auto& b : blocked)
    blocked_j.push_back({{"a", b.a}, {"b", b.b}, {"reason", b.reason}});
  j["blocked_merges"] = blocked_j;
  json factors_j = json::array();
  for (const auto& f : factors)
    factors_j.push_back(
        {{"group", f.group}, {"label", f.label}, {"factor", f.factor}});
  j["reweigh_factors"] = factors_j;
  j["rate_before"] = rate_before;
  j["rate_after"] = rate_after;
  if (previous_model) j["previous_model"] = *previous_model;
  return j;
}

}  // namespace raikit
