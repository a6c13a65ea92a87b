#include "raikit/slicetuner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "raikit/metrics.hpp"
#include "raikit/rng.hpp"

namespace raikit {

using nlohmann::json;

double LearningCurve::loss_at(double n) const { return b * std::pow(n, -a); }

// ---- Curve fitting -------------------------------------------------------------

CurveFit fit_learning_curve(const std::vector<std::pair<double, double>>& points,
                            std::size_t min_points) {
  std::set<double> distinct;
  for (const auto& [n, loss] : points) {
    if (n < 1.0) throw std::invalid_argument("sizes must be >= 1");
    if (loss <= 0.0) throw std::invalid_argument("losses must be > 0");
    distinct.insert(n);
  }
  if (distinct.size() < std::max<std::size_t>(min_points, 1))
    throw std::invalid_argument("need at least " + std::to_string(min_points) +
                                " distinct sizes, got " +
                                std::to_string(distinct.size()));

  // least squares in log-log space: ln loss = ln b - a ln n
  const double m = static_cast<double>(points.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [n, loss] : points) {
    const double x = std::log(n), y = std::log(loss);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = m * sxx - sx * sx;
  double slope = 0.0;
  if (denom > 0.0) slope = (m * sxy - sx * sy) / denom;

  CurveFit fit;
  if (slope < 0.0) {
    fit.curve.a = -slope;
    fit.curve.b = std::exp((sy - slope * sx) / m);
  } else {
    // non-decreasing data: project the exponent to 0, refit the level
    fit.curve.a = 0.0;
    fit.curve.b = std::exp(sy / m);
  }
  double rss = 0.0;
  for (const auto& [n, loss] : points) {
    const double r = std::log(loss) - (std::log(fit.curve.b) - fit.curve.a * std::log(n));
    rss += r * r;
  }
  fit.residual = std::sqrt(rss / m);
  return fit;
}

// ---- Learning-point measurement ---------------------------------------------------

std::vector<LearningPoint> measure_learning_points(
    const Dataset& d, const Slice& slice, const TrainConfig& cfg,
    const std::vector<std::size_t>& sizes, std::size_t trials,
    std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  for (std::size_t s : sizes) {
    if (s > slice.members.size())
      throw std::invalid_argument("subset size " + std::to_string(s) +
                                  " exceeds slice size " +
                                  std::to_string(slice.members.size()));
    if (s == 0) throw std::invalid_argument("subset size must be >= 1");
  }

  std::vector<std::size_t> others;
  {
    std::set<std::size_t> member_set(slice.members.begin(), slice.members.end());
    for (std::size_t i = 0; i < d.size(); ++i)
      if (!member_set.count(i)) others.push_back(i);
  }

  std::vector<LearningPoint> points;
  points.reserve(sizes.size());
  for (std::size_t s : sizes) {
    double mean_loss = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      // nested subsamples: one permutation per trial, prefixes per size
      std::vector<std::size_t> perm = slice.members;
      Rng rng(mix_seed(seed, 0x5e7 + t));
      rng.shuffle(perm);

      std::vector<Example> train_rows;
      train_rows.reserve(others.size() + s);
      for (std::size_t i : others) train_rows.push_back(d[i]);
      for (std::size_t k = 0; k < s; ++k) train_rows.push_back(d[perm[k]]);
      const Dataset train = d.with_examples(std::move(train_rows));

      TrainConfig run_cfg = cfg;
      run_cfg.seed = mix_seed(seed, 0xb11d + t * 131 + s);
      const Classifier model = train_sgd(train, run_cfg);

      // validation loss on the whole slice
      const std::vector<double> probs = model.predict(d);
      const std::vector<double> losses = per_example_losses(probs, d);
      double sum = 0.0;
      for (std::size_t i : slice.members) sum += losses[i];
      mean_loss += sum / static_cast<double>(slice.members.size());
    }
    points.push_back({static_cast<double>(s), mean_loss / static_cast<double>(trials)});
  }
  return points;
}

// ---- Allocation optimization -------------------------------------------------------

double AcquisitionProblem::average_loss() const {
  double sum = 0.0;
  for (std::size_t i = 0; i < sizes.size(); ++i)
    sum += curves[i].loss_at(sizes[i]);
  return sum / static_cast<double>(sizes.size());
}

void AcquisitionProblem::validate() const {
  const std::size_t n = sizes.size();
  if (n == 0) throw std::invalid_argument("no slices in the problem");
  if (curves.size() != n || unit_costs.size() != n)
    throw std::invalid_argument("problem arity mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (sizes[i] < 1.0) throw std::invalid_argument("slice sizes must be >= 1");
    if (!(curves[i].b > 0.0)) throw std::invalid_argument("curve b must be > 0");
    if (curves[i].a < 0.0) throw std::invalid_argument("curve a must be >= 0");
    if (!(unit_costs[i] > 0.0)) throw std::invalid_argument("costs must be > 0");
  }
  if (budget < 0.0) throw std::invalid_argument("budget must be >= 0");
  if (fairness_weight < 0.0) throw std::invalid_argument("lambda must be >= 0");
}

double allocation_objective(const AcquisitionProblem& p,
                            std::span<const double> d) {
  const double A = p.average_loss();
  double total = 0.0;
  for (std::size_t i = 0; i < p.sizes.size(); ++i) {
    const double loss = p.curves[i].loss_at(p.sizes[i] + d[i]);
    total += loss + p.fairness_weight * std::max(0.0, loss / A - 1.0);
  }
  return total;
}

std::vector<double> project_budget_simplex(std::span<const double> v,
                                           std::span<const double> costs,
                                           double budget) {
  const std::size_t n = v.size();
  const auto mass = [&](double mu) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      s += costs[i] * std::max(0.0, v[i] - mu * costs[i]);
    return s;
  };
  // mass(mu) is continuous and non-increasing; bracket then bisect
  double hi = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    hi = std::max(hi, v[i] / costs[i] + 1.0);
  double lo = -1.0;
  while (mass(lo) < budget) lo *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mass(mid) >= budget) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double mu = 0.5 * (lo + hi);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = std::max(0.0, v[i] - mu * costs[i]);
  // absorb the bisection slack into one coordinate to hit the budget exactly
  double spent = 0.0;
  for (std::size_t i = 0; i < n; ++i) spent += costs[i] * x[i];
  const double leftover = budget - spent;
  for (std::size_t i = 0; i < n; ++i) {
    const double adjusted = x[i] + leftover / costs[i];
    if (adjusted >= 0.0) {
      x[i] = adjusted;
      break;
    }
  }
  return x;
}

Allocation optimize_allocation(const AcquisitionProblem& p) {
  p.validate();
  const std::size_t n = p.sizes.size();
  if (p.budget == 0.0) return {std::vector<double>(n, 0.0)};

  const double A = p.average_loss();
  const auto objective = [&](const std::vector<double>& d) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double loss = p.curves[i].loss_at(p.sizes[i] + d[i]);
      total += loss + p.fairness_weight * std::max(0.0, loss / A - 1.0);
    }
    return total;
  };
  const auto gradient = [&](const std::vector<double>& d, std::vector<double>& g) {
    for (std::size_t i = 0; i < n; ++i) {
      const double base = p.sizes[i] + d[i];
      const double loss = p.curves[i].loss_at(base);
      double dloss = -p.curves[i].a * loss / base;
      if (loss > A) dloss *= 1.0 + p.fairness_weight / A;
      g[i] = dloss;
    }
  };

  // start from the equal-budget-share point
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i)
    d[i] = p.budget / (static_cast<double>(n) * p.unit_costs[i]);
  d = project_budget_simplex(d, p.unit_costs, p.budget);

  std::vector<double> g(n), best = d;
  double best_obj = objective(d);

  gradient(d, g);
  double g0 = 0.0;
  for (double v : g) g0 += v * v;
  g0 = std::sqrt(g0) + 1e-12;
  double radius = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    radius = std::max(radius, p.budget / p.unit_costs[i]);

  const int iterations = 4000;
  for (int t = 0; t < iterations; ++t) {
    gradient(d, g);
    const double step = radius / (g0 * std::sqrt(static_cast<double>(t + 1)));
    std::vector<double> next(n);
    for (std::size_t i = 0; i < n; ++i) next[i] = d[i] - step * g[i];
    d = project_budget_simplex(next, p.unit_costs, p.budget);
    const double obj = objective(d);
    if (obj < best_obj) {
      best_obj = obj;
      best = d;
    }
  }
  return {std::move(best)};
}

// ---- Imbalance ratio and baselines ----------------------------------------------------

double imbalance_ratio(std::span<const double> sizes) {
  if (sizes.empty()) throw std::invalid_argument("no slice sizes given");
  double lo = sizes[0], hi = sizes[0];
  for (double s : sizes) {
    if (s <= 0.0) throw std::invalid_argument("slice sizes must be positive");
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  return hi / lo;
}

Allocation baseline_uniform(std::span<const double> sizes, double budget,
                            std::span<const double> costs) {
  if (budget < 0.0) throw std::invalid_argument("budget must be >= 0");
  const std::size_t n = sizes.size();
  double cost_sum = 0.0;
  for (double c : costs) cost_sum += c;
  const double amount = cost_sum > 0.0 ? budget / cost_sum : 0.0;
  return {std::vector<double>(n, amount)};
}

Allocation baseline_waterfilling(std::span<const double> sizes, double budget,
                                 std::span<const double> costs) {
  if (budget < 0.0) throw std::invalid_argument("budget must be >= 0");
  const std::size_t n = sizes.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sizes[a] < sizes[b]; });

  double level = 0.0;
  double cost_acc = 0.0, weighted_size_acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    cost_acc += costs[order[k]];
    weighted_size_acc += costs[order[k]] * sizes[order[k]];
    const double candidate = (budget + weighted_size_acc) / cost_acc;
    const bool fits = (k + 1 == n) || candidate <= sizes[order[k + 1]];
    if (candidate >= sizes[order[k]] && fits) {
      level = candidate;
      break;
    }
  }
  std::vector<double> d(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) d[i] = std::max(0.0, level - sizes[i]);
  return {std::move(d)};
}

// ---- Iterative planner -------------------------------------------------------------

namespace {

/// Largest-remainder integerization of real allocations into example
/// counts, respecting the remaining budget.
std::vector<std::size_t> integerize(const std::vector<double>& amounts,
                                    std::span<const double> costs,
                                    double budget_cap) {
  const std::size_t n = amounts.size();
  std::vector<std::size_t> counts(n);
  std::vector<std::pair<double, std::size_t>> fracs;
  double spent = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    counts[i] = static_cast<std::size_t>(std::floor(amounts[i] + 1e-9));
    spent += static_cast<double>(counts[i]) * costs[i];
    fracs.push_back({amounts[i] - std::floor(amounts[i] + 1e-9), i});
  }
  std::stable_sort(fracs.begin(), fracs.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (const auto& [frac, i] : fracs) {
    if (frac <= 0.0) break;
    if (spent + costs[i] <= budget_cap + 1e-9) {
      counts[i] += 1;
      spent += costs[i];
    }
  }
  return counts;
}

std::vector<std::size_t> curve_sizes(std::size_t slice_size,
                                     std::size_t points) {
  // geometric-ish ladder from ~40% of the slice up to the full slice
  std::set<std::size_t> out;
  const double lo = 0.4;
  for (std::size_t k = 0; k < points; ++k) {
    const double f =
        points == 1 ? 1.0
                    : lo + (1.0 - lo) * static_cast<double>(k) /
                              static_cast<double>(points - 1);
    out.insert(std::max<std::size_t>(
        2, static_cast<std::size_t>(std::llround(f * static_cast<double>(slice_size)))));
  }
  return {out.begin(), out.end()};
}

}  // namespace

std::vector<double> per_slice_losses(const Dataset& d,
                                     const std::vector<Slice>& slices,
                                     const Classifier& model) {
  const std::vector<double> probs = model.predict(d);
  const std::vector<double> losses = per_example_losses(probs, d);
  std::vector<double> out;
  out.reserve(slices.size());
  for (const auto& slice : slices) {
    if (slice.members.empty())
      throw std::invalid_argument("slice has no members in the evaluation set");
    double sum = 0.0;
    for (std::size_t i : slice.members) sum += losses[i];
    out.push_back(sum / static_cast<double>(slice.members.size()));
  }
  return out;
}

PlanTrace plan_acquisition(const Dataset& d, const std::vector<Slice>& slices,
                           double budget, double fairness_weight,
                           const PlannerConfig& cfg, const Provider& provider,
                           const Dataset* eval_set) {
  if (slices.empty()) throw std::invalid_argument("no slices given");
  if (budget < 0.0) throw std::invalid_argument("budget must be >= 0");
  const std::size_t n = slices.size();

  std::vector<double> costs(n, 1.0);  // unit per-slice cost model
  std::vector<std::vector<std::size_t>> members(n);
  std::vector<Example> rows = d.examples();
  for (std::size_t i = 0; i < n; ++i) members[i] = slices[i].members;

  PlanTrace trace;
  double remaining = budget;
  std::vector<bool> exhausted(n, false);

  const auto acquire = [&](std::size_t slice_idx, std::size_t count) {
    count = std::min(count, static_cast<std::size_t>(std::floor(
                               remaining / costs[slice_idx] + 1e-9)));
    if (count == 0) return std::size_t{0};
    std::vector<Example> got = provider(slice_idx, count);
    if (got.size() < count) {
      exhausted[slice_idx] = true;
      trace.diagnostics.push_back(
          "provider exhausted for slice " + std::to_string(slice_idx) +
          " (asked " + std::to_string(count) + ", got " +
          std::to_string(got.size()) + ")");
    }
    for (auto& e : got) {
      members[slice_idx].push_back(rows.size());
      rows.push_back(std::move(e));
    }
    const std::size_t added = got.size();
    remaining -= static_cast<double>(added) * costs[slice_idx];
    trace.spent += static_cast<double>(added) * costs[slice_idx];
    return added;
  };

  // (i) minimum slice size so the first curves exist at all
  for (std::size_t i = 0; i < n; ++i) {
    if (members[i].size() < cfg.min_slice_size)
      acquire(i, cfg.min_slice_size - members[i].size());
  }

  const double min_cost = *std::min_element(costs.begin(), costs.end());
  const bool infinite_tau = std::isinf(cfg.influence_threshold);

  for (std::size_t iter = 0;
       iter < cfg.max_iterations && remaining >= min_cost; ++iter) {
    if (std::all_of(exhausted.begin(), exhausted.end(),
                    [](bool e) { return e; }))
      break;

    PlanIteration it;
    for (std::size_t i = 0; i < n; ++i)
      it.start_sizes.push_back(static_cast<double>(members[i].size()));

    // (1) fit curves from fresh measurements
    Dataset current = d.with_examples(rows);
    AcquisitionProblem problem;
    problem.sizes = it.start_sizes;
    problem.unit_costs = costs;
    problem.budget = remaining;
    problem.fairness_weight = fairness_weight;
    for (std::size_t i = 0; i < n; ++i) {
      Slice s{slices[i].predicate, members[i]};
      const auto sizes = curve_sizes(members[i].size(), cfg.curve_points);
      const auto points = measure_learning_points(
          current, s, cfg.model_cfg,
          std::vector<std::size_t>(sizes.begin(), sizes.end()),
          cfg.curve_trials, mix_seed(cfg.seed, 0xc0de + iter * 97 + i));
      std::vector<std::pair<double, double>> pts;
      for (const auto& pt : points)
        pts.push_back({pt.size, std::max(pt.loss, 1e-9)});
      problem.curves.push_back(fit_learning_curve(pts).curve);
    }
    it.curves = problem.curves;

    // (2) solve and acquire until the imbalance ratio drifts past tau
    const Allocation alloc = optimize_allocation(problem);
    it.allocation = alloc.amounts;
    std::vector<std::size_t> pending = integerize(alloc.amounts, costs, remaining);
    it.acquired.assign(n, 0);

    const double start_ratio = imbalance_ratio(it.start_sizes);
    bool drifted = false;
    bool progress = true;
    while (!drifted && progress && remaining >= min_cost) {
      progress = false;
      for (std::size_t i = 0; i < n && !drifted; ++i) {
        if (pending[i] == 0 || exhausted[i]) continue;
        const std::size_t chunk = std::min(pending[i], cfg.batch_granularity);
        const std::size_t added = acquire(i, chunk);
        pending[i] -= std::min(pending[i], chunk);
        it.acquired[i] += added;
        if (added > 0) progress = true;
        if (!infinite_tau) {
          std::vector<double> cur_sizes(n);
          for (std::size_t k = 0; k < n; ++k)
            cur_sizes[k] = static_cast<double>(members[k].size());
          const double ratio = imbalance_ratio(cur_sizes);
          if (std::abs(ratio - start_ratio) / start_ratio >
              cfg.influence_threshold)
            drifted = true;
        }
      }
    }
    trace.iterations.push_back(std::move(it));
    if (!drifted) break;  // allocation fully acquired or nothing left to do
  }

  // final measurement
  trace.final_dataset = d.with_examples(rows);
  for (std::size_t i = 0; i < n; ++i) trace.final_sizes.push_back(members[i].size());
  TrainConfig final_cfg = cfg.model_cfg;
  final_cfg.seed = mix_seed(cfg.seed, 0xf17a);
  const Classifier model = train_sgd(trace.final_dataset, final_cfg);
  if (eval_set) {
    std::vector<Slice> eval_slices;
    for (const auto& s : slices)
      eval_slices.push_back(apply_slice(*eval_set, s.predicate).first);
    trace.final_losses = per_slice_losses(*eval_set, eval_slices, model);
  } else {
    std::vector<Slice> cur_slices;
    for (std::size_t i = 0; i < n; ++i)
      cur_slices.push_back({slices[i].predicate, members[i]});
    trace.final_losses = per_slice_losses(trace.final_dataset, cur_slices, model);
  }
  trace.final_gap = equalized_error_rate_gap(trace.final_losses);
  return trace;
}

json PlanTrace::to_json() const {
  json iters = json::array();
  for (const auto& it : iterations) {
    json ij;
    ij["start_sizes"] = it.start_sizes;
    json curves_j = json::array();
    for (const auto& c : it.curves)
      curves_j.push_back({{"b", c.b}, {"a", c.a}});
    ij["curves"] = curves_j;
    ij["allocation"] = it.allocation;
    ij["acquired"] = it.acquired;
    iters.push_back(ij);
  }
  json j;
  j["iterations"] = iters;
  j["final_sizes"] = final_sizes;
  j["final_losses"] = final_losses;
  j["final_gap"] = final_gap;
  j["spent"] = spent;
  j["diagnostics"] = diagnostics;
  return j;
}

std::string learning_curve_csv(
    const std::vector<std::pair<std::string, std::vector<LearningPoint>>>& curves) {
  std::ostringstream out;
  out.precision(12);
  out << "slice,n,loss\n";
  for (const auto& [slice, points] : curves)
    for (const auto& pt : points)
      out << slice << "," << pt.size << "," << pt.loss << "\n";
  return out.str();
}

}  // namespace raikit
