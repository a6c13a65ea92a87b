#include "raikit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace raikit {

using nlohmann::json;

namespace {

void check_alignment(std::size_t preds, const Dataset& d) {
  if (preds != d.size())
    throw std::invalid_argument("prediction set size " + std::to_string(preds) +
                                " does not match dataset size " +
                                std::to_string(d.size()));
}

void require_two_groups(const Dataset& d) {
  if (d.groups().size() != 2)
    throw std::invalid_argument("binary-group measure needs exactly two groups, got " +
                                std::to_string(d.groups().size()));
}

/// Weighted positive-prediction rate per group; throws on an empty group.
std::array<double, 2> group_positive_rates(const std::vector<int>& preds,
                                           const Dataset& d) {
  const auto& groups = d.groups();
  std::array<double, 2> pos{0.0, 0.0}, tot{0.0, 0.0};
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::size_t z = d.group(i) == groups[0] ? 0 : 1;
    tot[z] += d.weight(i);
    if (preds[i] == 1) pos[z] += d.weight(i);
  }
  for (std::size_t z = 0; z < 2; ++z) {
    if (tot[z] <= 0.0)
      throw std::invalid_argument("group " + groups[z] +
                                  " is empty (or has zero total weight)");
  }
  return {pos[0] / tot[0], pos[1] / tot[1]};
}

}  // namespace

double demographic_parity(const std::vector<int>& preds, const Dataset& d) {
  check_alignment(preds.size(), d);
  require_two_groups(d);
  const auto rates = group_positive_rates(preds, d);
  if (rates[0] == 0.0 && rates[1] == 0.0) return 1.0;
  if (rates[0] == 0.0 || rates[1] == 0.0) return 0.0;
  return std::min(rates[0] / rates[1], rates[1] / rates[0]);
}

double equalized_odds_disparity(const std::vector<int>& preds,
                                const Dataset& d) {
  check_alignment(preds.size(), d);
  require_two_groups(d);
  const auto& groups = d.groups();
  double pos[2][2] = {{0, 0}, {0, 0}};
  double tot[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::size_t z = d.group(i) == groups[0] ? 0 : 1;
    const int y = d.label(i);
    tot[z][y] += d.weight(i);
    if (preds[i] == 1) pos[z][y] += d.weight(i);
  }
  double disparity = 0.0;
  for (int y = 0; y < 2; ++y) {
    for (std::size_t z = 0; z < 2; ++z) {
      if (tot[z][y] <= 0.0)
        throw std::invalid_argument("empty (group,label) cell (" + groups[z] +
                                    "," + std::to_string(y) + ")");
    }
    disparity = std::max(
        disparity, std::abs(pos[0][y] / tot[0][y] - pos[1][y] / tot[1][y]));
  }
  return disparity;
}

double accuracy(const std::vector<int>& preds, const Dataset& d,
                bool weighted) {
  check_alignment(preds.size(), d);
  double correct = 0.0, total = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double w = weighted ? d.weight(i) : 1.0;
    total += w;
    if (preds[i] == d.label(i)) correct += w;
  }
  if (total <= 0.0) throw std::invalid_argument("total weight is zero");
  return correct / total;
}

double weighted_positive_rate(const Dataset& d, const std::string& group) {
  const auto& groups = d.groups();
  if (std::find(groups.begin(), groups.end(), group) == groups.end())
    throw std::invalid_argument("unknown group: " + group);
  double pos = 0.0, tot = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.group(i) != group) continue;
    tot += d.weight(i);
    if (d.label(i) == 1) pos += d.weight(i);
  }
  if (tot <= 0.0)
    throw std::invalid_argument("group " + group +
                                " is empty (or has zero total weight)");
  return pos / tot;
}

namespace {

double clamp_prob(double p) {
  return std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
}

double nll(double p, int y) {
  const double q = clamp_prob(p);
  return y == 1 ? -std::log(q) : -std::log(1.0 - q);
}

}  // namespace

double logistic_loss(const std::vector<double>& probabilities, const Dataset& d,
                     bool weighted) {
  check_alignment(probabilities.size(), d);
  double sum = 0.0, total = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double w = weighted ? d.weight(i) : 1.0;
    sum += w * nll(probabilities[i], d.label(i));
    total += w;
  }
  if (total <= 0.0) throw std::invalid_argument("total weight is zero");
  return sum / total;
}

std::vector<double> per_example_losses(const std::vector<double>& probabilities,
                                       const Dataset& d) {
  check_alignment(probabilities.size(), d);
  std::vector<double> losses(d.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    losses[i] = nll(probabilities[i], d.label(i));
  return losses;
}

double equalized_error_rate_gap(const std::vector<double>& per_slice_losses) {
  if (per_slice_losses.empty())
    throw std::invalid_argument("no per-slice losses given");
  const auto [lo, hi] =
      std::minmax_element(per_slice_losses.begin(), per_slice_losses.end());
  return *hi - *lo;
}

FairnessReport fairness_report(const std::vector<int>& preds, const Dataset& d) {
  check_alignment(preds.size(), d);
  require_two_groups(d);
  const auto& groups = d.groups();

  FairnessReport report;
  report.dp = demographic_parity(preds, d);
  report.accuracy = accuracy(preds, d, true);
  report.group_order = {groups[0], groups[1]};
  const auto rates = group_positive_rates(preds, d);
  report.positive_rate[groups[0]] = rates[0];
  report.positive_rate[groups[1]] = rates[1];

  double correct[2][2] = {{0, 0}, {0, 0}};
  double pos[2][2] = {{0, 0}, {0, 0}};
  double tot[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::size_t z = d.group(i) == groups[0] ? 0 : 1;
    const int y = d.label(i);
    tot[z][y] += d.weight(i);
    if (preds[i] == d.label(i)) correct[z][y] += d.weight(i);
    if (preds[i] == 1) pos[z][y] += d.weight(i);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  bool all_cells = true;
  for (std::size_t z = 0; z < 2; ++z) {
    std::array<double, 2> acc{nan, nan};
    for (int y = 0; y < 2; ++y) {
      if (tot[z][y] > 0.0) {
        acc[y] = correct[z][y] / tot[z][y];
      } else {
        all_cells = false;
      }
    }
    report.cell_accuracy[groups[z]] = acc;
  }
  if (all_cells) {
    double disparity = 0.0;
    for (int y = 0; y < 2; ++y)
      disparity = std::max(
          disparity, std::abs(pos[0][y] / tot[0][y] - pos[1][y] / tot[1][y]));
    report.eo_disparity = disparity;
  } else {
    report.eo_disparity = nan;
  }
  return report;
}

json FairnessReport::to_json() const {
  json j;
  j["dp"] = dp;
  j["eo_disparity"] = eo_disparity;
  j["accuracy"] = accuracy;
  for (const auto& [group, rate] : positive_rate)
    j["positive_rate_" + group] = rate;
  for (const auto& [group, acc] : cell_accuracy) {
    j["accuracy_" + group + "_y0"] = acc[0];
    j["accuracy_" + group + "_y1"] = acc[1];
  }
  return j;
}

}  // namespace raikit
