#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "raikit/dataset.hpp"
#include "raikit/model.hpp"

namespace raikit {

/// A slice candidate with the statistics that decide whether it is
/// problematic. p_value is the raw Welch p; corrected_p carries the
/// Bonferroni correction over the candidates tested in the same run.
struct CandidateSlice {
  SlicePredicate predicate;
  std::vector<std::size_t> members;
  double slice_loss = 0.0;
  double complement_loss = 0.0;
  double effect = 0.0;
  double p_value = 1.0;
  double corrected_p = 1.0;
  double impact = 0.0;  // size x (slice loss - complement loss)

  std::size_t size() const { return members.size(); }
};

struct SearchConfig {
  std::size_t max_literals = 3;   // L
  std::size_t min_size = 30;      // m
  double effect_threshold = 0.4;  // T
  double alpha = 0.05;
  std::size_t max_results = 10;   // k
  bool one_sided = false;
};

/// Standardized mean difference (pooled standard deviation); positive
/// when the slice underperforms. Zero pooled deviation yields 0 for
/// equal means and +infinity otherwise.
double effect_size(std::span<const double> slice_losses,
                   std::span<const double> complement_losses);

/// Two-sample Welch t-test p-value on per-example losses
/// (Welch-Satterthwaite degrees of freedom, incomplete-beta tail).
double significance_test(std::span<const double> slice_losses,
                         std::span<const double> complement_losses,
                         bool one_sided = false);

/// Regularized incomplete beta I_x(a, b) via Lentz continued fractions.
double regularized_incomplete_beta(double a, double b, double x);

/// CDF of Student's t distribution with df degrees of freedom.
double student_t_cdf(double t, double df);

/// Breadth-first lattice search over feature-value conjunctions, level by
/// level up to max_literals, pruned by min_size; results sorted by
/// accuracy impact (ties: fewer literals, then lexicographic).
std::vector<CandidateSlice> lattice_search(const Dataset& d,
                                           const std::vector<double>& losses,
                                           const SearchConfig& cfg,
                                           std::size_t* candidates_tested = nullptr);

/// Greedy loss-variance decision tree over feature-value equality tests.
/// Leaf member sets are pairwise disjoint; each candidate carries the
/// positive literals of its path (the member set is exact and may be
/// further restricted by the path's negative branches).
std::vector<CandidateSlice> decision_tree_search(
    const Dataset& d, const std::vector<double>& losses,
    const SearchConfig& cfg, std::size_t* candidates_tested = nullptr);

enum class SearchStrategy { Tree, Lattice };

struct SliceReport {
  SearchStrategy strategy = SearchStrategy::Lattice;
  std::vector<CandidateSlice> slices;
  std::size_t candidates_tested = 0;

  nlohmann::json to_json(const Schema& schema) const;
  void print_table(std::ostream& os, const Schema& schema) const;
};

/// Scores the model's per-example losses and dispatches to the requested
/// search strategy.
SliceReport find_problematic(const Dataset& d, const Classifier& model,
                             const SearchConfig& cfg, SearchStrategy strategy);

/// Runs both strategies and reports how their findings overlap.
struct StrategyComparison {
  std::size_t lattice_count = 0;
  std::size_t tree_count = 0;
  std::size_t shared_predicates = 0;
};
StrategyComparison compare_strategies(const Dataset& d, const Classifier& model,
                                      const SearchConfig& cfg);

}  // namespace raikit
