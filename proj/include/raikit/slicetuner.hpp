#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "raikit/dataset.hpp"
#include "raikit/model.hpp"

namespace raikit {

/// Power-law learning curve: predicted loss at slice size n is b * n^(-a).
struct LearningCurve {
  double b = 1.0;  // > 0
  double a = 0.0;  // >= 0

  double loss_at(double n) const;
};

struct CurveFit {
  LearningCurve curve;
  double residual = 0.0;  // RMS residual in log-log space
};

/// Closed-form least squares on (ln n, ln loss), exponent projected to
/// >= 0. Needs at least min_points distinct sizes and positive losses.
CurveFit fit_learning_curve(const std::vector<std::pair<double, double>>& points,
                            std::size_t min_points = 2);

struct LearningPoint {
  double size = 0.0;
  double loss = 0.0;
};

/// Mean validation loss on the slice for each subset size: the model is
/// trained on (all other slices in full) + (nested seeded subsample of
/// this slice), averaged over trials.
std::vector<LearningPoint> measure_learning_points(
    const Dataset& d, const Slice& slice, const TrainConfig& cfg,
    const std::vector<std::size_t>& sizes, std::size_t trials,
    std::uint64_t seed);

/// Budget-constrained acquisition instance. average_loss (the fairness
/// reference A) is computed from the current sizes and stays frozen for
/// the duration of one solve.
struct AcquisitionProblem {
  std::vector<double> sizes;        // |s_i| >= 1
  std::vector<LearningCurve> curves;
  std::vector<double> unit_costs;   // C(s_i) > 0
  double budget = 0.0;              // B >= 0
  double fairness_weight = 0.0;     // lambda >= 0

  double average_loss() const;
  void validate() const;
};

struct Allocation {
  std::vector<double> amounts;  // d_i >= 0, sum C_i d_i = B
};

/// Objective: sum_i b_i (s_i + d_i)^(-a_i)
///          + lambda * sum_i max{0, b_i (s_i + d_i)^(-a_i) / A - 1}.
double allocation_objective(const AcquisitionProblem& p,
                            std::span<const double> d);

/// Projected gradient on the scaled simplex {d >= 0, sum C_i d_i = B}
/// with diminishing steps and best-iterate tracking. The objective is
/// convex for a_i >= 0.
Allocation optimize_allocation(const AcquisitionProblem& p);

/// Euclidean projection onto {x >= 0, sum c_i x_i = budget}.
std::vector<double> project_budget_simplex(std::span<const double> v,
                                           std::span<const double> costs,
                                           double budget);

/// max size / min size; >= 1. Throws on an empty list or a zero size.
double imbalance_ratio(std::span<const double> sizes);

/// Equal amounts per slice subject to the budget.
Allocation baseline_uniform(std::span<const double> sizes, double budget,
                            std::span<const double> costs);

/// Raises the smallest slices to a common level consuming exactly the
/// budget.
Allocation baseline_waterfilling(std::span<const double> sizes, double budget,
                                 std::span<const double> costs);

// ---- Iterative planner -------------------------------------------------------

/// Supplies up to `count` new examples for slice `slice_idx`; returning
/// fewer means the source is exhausted.
using Provider =
    std::function<std::vector<Example>(std::size_t slice_idx, std::size_t count)>;

struct PlannerConfig {
  std::size_t min_slice_size = 30;
  double influence_threshold = 0.2;  // tau: relative imbalance-ratio change
  std::size_t batch_granularity = 10;
  std::size_t curve_points = 4;
  std::size_t curve_trials = 1;
  std::size_t max_iterations = 50;
  TrainConfig model_cfg;
  std::uint64_t seed = 0;
};

struct PlanIteration {
  std::vector<double> start_sizes;
  std::vector<LearningCurve> curves;
  std::vector<double> allocation;
  std::vector<std::size_t> acquired;
};

struct PlanTrace {
  std::vector<PlanIteration> iterations;
  std::vector<std::size_t> final_sizes;
  std::vector<double> final_losses;  // per slice
  double final_gap = 0.0;            // equalized-error-rate gap
  double spent = 0.0;
  std::vector<std::string> diagnostics;
  Dataset final_dataset;

  nlohmann::json to_json() const;
};

/// Iterative acquire/re-fit loop guarded by the imbalance-ratio proxy:
/// tops up slices below the minimum size, then alternates between solving
/// the allocation and acquiring in small batches until the imbalance
/// ratio drifts past tau (triggering a curve re-fit) or the budget runs
/// out. Final losses are measured on eval_set when given, else in-sample.
PlanTrace plan_acquisition(const Dataset& d, const std::vector<Slice>& slices,
                           double budget, double fairness_weight,
                           const PlannerConfig& cfg, const Provider& provider,
                           const Dataset* eval_set = nullptr);

/// Per-slice mean losses of a trained model (on eval_set when given).
std::vector<double> per_slice_losses(const Dataset& d,
                                     const std::vector<Slice>& slices,
                                     const Classifier& model);

/// Tidy CSV of learning-curve points (slice, n, loss).
std::string learning_curve_csv(
    const std::vector<std::pair<std::string, std::vector<LearningPoint>>>& curves);

}  // namespace raikit
