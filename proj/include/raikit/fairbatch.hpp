#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "raikit/dataset.hpp"
#include "raikit/metrics.hpp"
#include "raikit/model.hpp"

namespace raikit {

/// Per-label sampling rates: lambda_y is the fraction of the batch's
/// label-y portion drawn from the first group (z0). The label split
/// itself stays fixed at the dataset's label prior.
struct SamplingRates {
  double lambda_y0 = 0.5;
  double lambda_y1 = 0.5;
  double label0_fraction = 0.5;
};

enum class FairnessTarget { EqualizedOdds, DemographicParity };

struct FairBatchConfig {
  FairnessTarget target = FairnessTarget::EqualizedOdds;
  double alpha = 0.005;  // adjustment step, > 0 to adapt
  double clip_lo = 0.0;
  double clip_hi = 1.0;
};

/// Empirical start: lambda_y = P(Z = z0 | Y = y). Throws when one of the
/// four (group, label) cells is empty.
SamplingRates init_rates(const Dataset& d);

/// One signed step of magnitude <= alpha per lambda. Equalized odds mode
/// compares per-(group,label) accuracies; demographic parity mode moves
/// both lambdas by the positive-rate comparison.
SamplingRates update_rates(const SamplingRates& rates,
                           const FairnessReport& report,
                           const FairBatchConfig& cfg);

struct LambdaTrajectoryRow {
  std::size_t epoch = 0;
  double lambda_y0 = 0.0;
  double lambda_y1 = 0.0;
  double disparity = 0.0;  // target metric's disparity, NaN when unknown
};

/// Batch sampler that re-balances the four (group, label) cells each
/// epoch from the fairness of the intermediate model. Stateful: bound to
/// a single training run.
class FairBatchSampler final : public BatchSampler {
 public:
  FairBatchSampler(const Dataset& d, FairBatchConfig cfg,
                   std::size_t batch_size, std::uint64_t seed, bool adapt);

  std::size_t batches_per_epoch() const override;
  bool wants_feedback() const override { return adapt_; }
  std::vector<std::size_t> next_batch(std::size_t epoch, std::size_t step,
                                      const FairnessReport* feedback) override;

  const SamplingRates& rates() const { return rates_; }
  const std::vector<LambdaTrajectoryRow>& trajectory() const {
    return trajectory_;
  }

  /// Cell draw counts for the current rates (sums exactly to batch size).
  std::array<std::size_t, 4> cell_counts() const;

 private:
  FairBatchConfig cfg_;
  std::size_t batch_size_;
  std::size_t n_;
  bool adapt_;
  Rng rng_;
  SamplingRates rates_;
  std::array<std::vector<std::size_t>, 4> cells_;  // (y0z0, y0z1, y1z0, y1z1)
  std::vector<LambdaTrajectoryRow> trajectory_;
  std::size_t seen_epochs_ = 0;
};

std::unique_ptr<FairBatchSampler> make_fairbatch_sampler(
    const Dataset& d, const FairBatchConfig& cfg, std::size_t batch_size,
    std::uint64_t seed);

/// Stratified sampling at the empirical proportions: a FairBatch sampler
/// with the adjustment step pinned to zero.
std::unique_ptr<FairBatchSampler> make_stratified_sampler(
    const Dataset& d, std::size_t batch_size, std::uint64_t seed);

/// Tidy CSV of a lambda trajectory (epoch, lambda1, lambda2, disparity).
std::string lambda_path_csv(const std::vector<LambdaTrajectoryRow>& rows);

}  // namespace raikit
