#include "raikit/fairbatch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace raikit {

namespace {

double clip(double v, double lo, double hi) {
  return std::min(hi, std::max(lo, v));
}

/// Cell order: (y=0,z=0), (y=0,z=1), (y=1,z=0), (y=1,z=1).
std::array<std::vector<std::size_t>, 4> split_cells(const Dataset& d) {
  if (d.groups().size() != 2)
    throw std::invalid_argument("FairBatch needs exactly two groups");
  const std::string& z0 = d.groups()[0];
  std::array<std::vector<std::size_t>, 4> cells;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::size_t z = d.group(i) == z0 ? 0 : 1;
    cells[2 * static_cast<std::size_t>(d.label(i)) + z].push_back(i);
  }
  return cells;
}

/// Largest-remainder rounding of quotas so counts sum to total.
std::array<std::size_t, 4> round_counts(const std::array<double, 4>& quotas,
                                        std::size_t total) {
  std::array<std::size_t, 4> counts{};
  std::array<double, 4> frac{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < 4; ++c) {
    counts[c] = static_cast<std::size_t>(std::floor(quotas[c]));
    frac[c] = quotas[c] - static_cast<double>(counts[c]);
    assigned += counts[c];
  }
  std::array<std::size_t, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < total; ++k) {
    counts[order[k % 4]] += 1;
    ++assigned;
  }
  return counts;
}

}  // namespace

SamplingRates init_rates(const Dataset& d) {
  const auto cells = split_cells(d);
  for (std::size_t c = 0; c < 4; ++c) {
    if (cells[c].empty())
      throw std::invalid_argument("empty (group,label) cell: y=" +
                                  std::to_string(c / 2) + ", z=" +
                                  std::to_string(c % 2));
  }
  SamplingRates rates;
  const double n_y0 = static_cast<double>(cells[0].size() + cells[1].size());
  const double n_y1 = static_cast<double>(cells[2].size() + cells[3].size());
  rates.lambda_y0 = static_cast<double>(cells[0].size()) / n_y0;
  rates.lambda_y1 = static_cast<double>(cells[2].size()) / n_y1;
  rates.label0_fraction = n_y0 / (n_y0 + n_y1);
  return rates;
}

SamplingRates update_rates(const SamplingRates& rates,
                           const FairnessReport& report,
                           const FairBatchConfig& cfg) {
  SamplingRates next = rates;
  if (report.group_order.size() != 2)
    throw std::invalid_argument("report must cover exactly two groups");
  const std::string& z0 = report.group_order[0];
  const std::string& z1 = report.group_order[1];

  if (cfg.target == FairnessTarget::EqualizedOdds) {
    const auto it0 = report.cell_accuracy.find(z0);
    const auto it1 = report.cell_accuracy.find(z1);
    if (it0 == report.cell_accuracy.end() || it1 == report.cell_accuracy.end())
      throw std::invalid_argument("report misses per-cell accuracies");
    double* lambdas[2] = {&next.lambda_y0, &next.lambda_y1};
    for (int y = 0; y < 2; ++y) {
      const double a0 = it0->second[y], a1 = it1->second[y];
      if (std::isnan(a0) || std::isnan(a1)) continue;
      if (a0 < a1) {
        *lambdas[y] += cfg.alpha;  // z0 underperforms: raise its share
      } else if (a0 > a1) {
        *lambdas[y] -= cfg.alpha;
      }
      *lambdas[y] = clip(*lambdas[y], cfg.clip_lo, cfg.clip_hi);
    }
  } else {
    const double r0 = report.positive_rate.at(z0);
    const double r1 = report.positive_rate.at(z1);
    double step = 0.0;
    if (r0 < r1) {
      step = cfg.alpha;
    } else if (r0 > r1) {
      step = -cfg.alpha;
    }
    next.lambda_y0 = clip(next.lambda_y0 + step, cfg.clip_lo, cfg.clip_hi);
    next.lambda_y1 = clip(next.lambda_y1 + step, cfg.clip_lo, cfg.clip_hi);
  }
  return next;
}

FairBatchSampler::FairBatchSampler(const Dataset& d, FairBatchConfig cfg,
                                   std::size_t batch_size, std::uint64_t seed,
                                   bool adapt)
    : cfg_(cfg),
      batch_size_(batch_size),
      n_(d.size()),
      adapt_(adapt),
      rng_(mix_seed(seed, 0xfa1bULL)),
      rates_(init_rates(d)),
      cells_(split_cells(d)) {
  if (batch_size_ < 4)
    throw std::invalid_argument("batch size must be >= 4 (one slot per cell)");
  if (cfg_.alpha < 0.0) throw std::invalid_argument("alpha must be >= 0");
}

std::size_t FairBatchSampler::batches_per_epoch() const {
  return (n_ + batch_size_ - 1) / batch_size_;
}

std::array<std::size_t, 4> FairBatchSampler::cell_counts() const {
  const double b = static_cast<double>(batch_size_);
  const double p0 = rates_.label0_fraction;
  const std::array<double, 4> quotas = {
      b * p0 * rates_.lambda_y0,
      b * p0 * (1.0 - rates_.lambda_y0),
      b * (1.0 - p0) * rates_.lambda_y1,
      b * (1.0 - p0) * (1.0 - rates_.lambda_y1),
  };
  return round_counts(quotas, batch_size_);
}

std::vector<std::size_t> FairBatchSampler::next_batch(
    std::size_t epoch, std::size_t step, const FairnessReport* feedback) {
  if (step == 0) {
    if (epoch > 0 && adapt_ && feedback)
      rates_ = update_rates(rates_, *feedback, cfg_);
    double disparity = std::numeric_limits<double>::quiet_NaN();
    if (feedback) {
      disparity = cfg_.target == FairnessTarget::EqualizedOdds
                      ? feedback->eo_disparity
                      : 1.0 - feedback->dp;
    }
    trajectory_.push_back({epoch, rates_.lambda_y0, rates_.lambda_y1, disparity});
    ++seen_epochs_;
  }

  const auto counts = cell_counts();
  std::vector<std::size_t> batch;
  batch.reserve(batch_size_);
  for (std::size_t c = 0; c < 4; ++c) {
    if (counts[c] == 0) continue;
    if (cells_[c].empty())
      throw std::invalid_argument("required (group,label) cell is empty: y=" +
                                  std::to_string(c / 2) + ", z=" +
                                  std::to_string(c % 2));
    for (std::size_t k = 0; k < counts[c]; ++k)
      batch.push_back(cells_[c][rng_.below(cells_[c].size())]);
  }
  return batch;
}

std::unique_ptr<FairBatchSampler> make_fairbatch_sampler(
    const Dataset& d, const FairBatchConfig& cfg, std::size_t batch_size,
    std::uint64_t seed) {
  return std::make_unique<FairBatchSampler>(d, cfg, batch_size, seed, true);
}

std::unique_ptr<FairBatchSampler> make_stratified_sampler(
    const Dataset& d, std::size_t batch_size, std::uint64_t seed) {
  FairBatchConfig cfg;
  cfg.alpha = 0.0;
  return std::make_unique<FairBatchSampler>(d, cfg, batch_size, seed, false);
}

std::string lambda_path_csv(const std::vector<LambdaTrajectoryRow>& rows) {
  std::ostringstream out;
  out.precision(12);
  out << "epoch,lambda1,lambda2,disparity\n";
  for (const auto& r : rows)
    out << r.epoch << "," << r.lambda_y0 << "," << r.lambda_y1 << ","
        << r.disparity << "\n";
  return out.str();
}

}  // namespace raikit
