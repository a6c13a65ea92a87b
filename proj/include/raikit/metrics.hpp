#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "raikit/dataset.hpp"

namespace raikit {

/// Fairness/accuracy summary of one prediction set against a dataset.
/// cell_accuracy[group][label] is the weighted accuracy restricted to
/// that (group, label) cell; NaN when the cell is empty.
struct FairnessReport {
  double dp = 0.0;
  double eo_disparity = 0.0;
  double accuracy = 0.0;
  std::vector<std::string> group_order;  // as declared by the dataset
  std::map<std::string, double> positive_rate;
  std::map<std::string, std::array<double, 2>> cell_accuracy;

  nlohmann::json to_json() const;  // flat document
};

/// min(rate0/rate1, rate1/rate0) of the weighted positive-prediction
/// rates of the two groups; 1 when both rates are 0, 0 when exactly one is.
double demographic_parity(const std::vector<int>& preds, const Dataset& d);

/// max over labels of |P(Yhat=1 | z0, y) - P(Yhat=1 | z1, y)| (weighted).
double equalized_odds_disparity(const std::vector<int>& preds,
                                const Dataset& d);

double accuracy(const std::vector<int>& preds, const Dataset& d,
                bool weighted = true);

/// Weight share of positive labels within one group.
double weighted_positive_rate(const Dataset& d, const std::string& group);

/// Negative log-likelihood of probabilities clamped to
/// [1e-7, 1 - 1e-7]; weighted = weighted mean, else plain mean.
double logistic_loss(const std::vector<double>& probabilities,
                     const Dataset& d, bool weighted = true);

/// Unaggregated per-example negative log-likelihoods.
std::vector<double> per_example_losses(const std::vector<double>& probabilities,
                                       const Dataset& d);

/// max - min over per-slice losses; 0 means perfectly equalized error rates.
double equalized_error_rate_gap(const std::vector<double>& per_slice_losses);

/// Full report; eo_disparity is NaN when some (group, label) cell is empty.
FairnessReport fairness_report(const std::vector<int>& preds, const Dataset& d);

constexpr double kProbClamp = 1e-7;

}  // namespace raikit
