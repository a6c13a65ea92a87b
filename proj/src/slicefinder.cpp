#include "raikit/slicefinder.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "raikit/metrics.hpp"

namespace raikit {

using nlohmann::json;

// ---- Statistics ----------------------------------------------------------------

namespace {

struct Moments {
  double n = 0, mean = 0, var = 0;  // Bessel-corrected variance
};

Moments moments(std::span<const double> xs) {
  Moments m;
  m.n = static_cast<double>(xs.size());
  for (double x : xs) m.mean += x;
  m.mean /= m.n;
  if (xs.size() > 1) {
    double ss = 0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.var = ss / (m.n - 1.0);
  }
  return m;
}

double betacf(double a, double b, double x) {
  // Lentz's continued fraction for the incomplete beta function
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-14;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (df <= 0.0) throw std::invalid_argument("degrees of freedom must be > 0");
  const double x = df / (df + t * t);
  const double tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x);
  return t >= 0.0 ? 1.0 - tail : tail;
}

double effect_size(std::span<const double> slice_losses,
                   std::span<const double> complement_losses) {
  if (slice_losses.empty() || complement_losses.empty())
    throw std::invalid_argument("effect size needs two non-empty samples");
  const Moments s = moments(slice_losses);
  const Moments c = moments(complement_losses);
  const double df = s.n + c.n - 2.0;
  double pooled = 0.0;
  if (df > 0.0)
    pooled = std::sqrt(((s.n - 1.0) * s.var + (c.n - 1.0) * c.var) / df);
  const double diff = s.mean - c.mean;
  if (pooled == 0.0) {
    if (diff == 0.0) return 0.0;
    return diff > 0.0 ? std::numeric_limits<double>::infinity()
                      : -std::numeric_limits<double>::infinity();
  }
  return diff / pooled;
}

double significance_test(std::span<const double> slice_losses,
                         std::span<const double> complement_losses,
                         bool one_sided) {
  if (slice_losses.size() < 2 || complement_losses.size() < 2)
    throw std::invalid_argument("each sample needs at least 2 values");
  const Moments s = moments(slice_losses);
  const Moments c = moments(complement_losses);
  const double se2 = s.var / s.n + c.var / c.n;
  const double diff = s.mean - c.mean;
  if (se2 == 0.0) {
    if (diff == 0.0) return 1.0;
    if (!one_sided) return 0.0;
    return diff > 0.0 ? 0.0 : 1.0;
  }
  const double t = diff / std::sqrt(se2);
  const double df =
      se2 * se2 / ((s.var / s.n) * (s.var / s.n) / (s.n - 1.0) +
                   (c.var / c.n) * (c.var / c.n) / (c.n - 1.0));
  const double upper_tail = 1.0 - student_t_cdf(t, df);
  if (one_sided) return upper_tail;  // H1: slice underperforms
  return 2.0 * std::min(student_t_cdf(t, df), upper_tail);
}

// ---- Candidate evaluation ---------------------------------------------------------

namespace {

struct Domain {
  int feature_index;
  std::vector<std::variant<std::string, int>> values;
};

std::vector<Domain> slice_domains(const Schema& schema) {
  std::vector<Domain> domains;
  for (std::size_t f = 0; f < schema.features.size(); ++f) {
    const FeatureDecl& decl = schema.features[f];
    Domain dom;
    dom.feature_index = static_cast<int>(f);
    if (decl.kind == FeatureKind::Categorical) {
      for (const auto& tok : decl.vocabulary) dom.values.emplace_back(tok);
    } else {
      for (std::size_t b = 0; b < decl.bin_count(); ++b)
        dom.values.emplace_back(static_cast<int>(b));
    }
    if (!dom.values.empty()) domains.push_back(std::move(dom));
  }
  if (domains.empty())
    throw std::invalid_argument(
        "slicing needs categorical or binned numeric features");
  return domains;
}

/// Precomputed per-example value of a feature as a dense id into its domain.
std::vector<int> feature_value_ids(const Dataset& d, const Domain& dom) {
  const FeatureDecl& decl = d.schema().features[dom.feature_index];
  std::vector<int> ids(d.size(), -1);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (decl.kind == FeatureKind::Categorical) {
      const std::string& tok = d.categorical(i, dom.feature_index);
      for (std::size_t v = 0; v < dom.values.size(); ++v) {
        if (std::get<std::string>(dom.values[v]) == tok) {
          ids[i] = static_cast<int>(v);
          break;
        }
      }
    } else {
      ids[i] = bin_index(decl, d.numeric(i, dom.feature_index));
    }
  }
  return ids;
}

CandidateSlice evaluate_candidate(SlicePredicate predicate,
                                  std::vector<std::size_t> members,
                                  const std::vector<double>& losses) {
  CandidateSlice cand;
  cand.predicate = std::move(predicate);
  cand.members = std::move(members);

  std::vector<char> in_slice(losses.size(), 0);
  for (std::size_t i : cand.members) in_slice[i] = 1;
  std::vector<double> slice_l, comp_l;
  slice_l.reserve(cand.members.size());
  comp_l.reserve(losses.size() - cand.members.size());
  for (std::size_t i = 0; i < losses.size(); ++i)
    (in_slice[i] ? slice_l : comp_l).push_back(losses[i]);

  double ssum = 0, csum = 0;
  for (double v : slice_l) ssum += v;
  for (double v : comp_l) csum += v;
  cand.slice_loss = slice_l.empty() ? 0.0 : ssum / slice_l.size();
  cand.complement_loss = comp_l.empty() ? 0.0 : csum / comp_l.size();
  cand.effect = effect_size(slice_l, comp_l);
  cand.p_value = (slice_l.size() >= 2 && comp_l.size() >= 2)
                     ? significance_test(slice_l, comp_l)
                     : 1.0;
  cand.impact = static_cast<double>(cand.members.size()) *
                (cand.slice_loss - cand.complement_loss);
  return cand;
}

std::string predicate_key(const SlicePredicate& p, const Schema& schema) {
  return p.to_string(schema);
}

void finalize(std::vector<CandidateSlice>& candidates, std::size_t tested,
              const SearchConfig& cfg, const Schema& schema) {
  for (auto& c : candidates)
    c.corrected_p = std::min(1.0, c.p_value * static_cast<double>(tested));
  std::erase_if(candidates, [&](const CandidateSlice& c) {
    return !(c.effect >= cfg.effect_threshold && c.corrected_p <= cfg.alpha);
  });
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](const CandidateSlice& a, const CandidateSlice& b) {
                     if (a.impact != b.impact) return a.impact > b.impact;
                     if (a.predicate.literals.size() != b.predicate.literals.size())
                       return a.predicate.literals.size() <
                              b.predicate.literals.size();
                     return predicate_key(a.predicate, schema) <
                            predicate_key(b.predicate, schema);
                   });
  if (candidates.size() > cfg.max_results) candidates.resize(cfg.max_results);
}

}  // namespace

std::vector<CandidateSlice> lattice_search(const Dataset& d,
                                           const std::vector<double>& losses,
                                           const SearchConfig& cfg,
                                           std::size_t* candidates_tested) {
  if (losses.size() != d.size())
    throw std::invalid_argument("losses are not aligned to the dataset");
  const Schema& schema = d.schema();
  const std::vector<Domain> domains = slice_domains(schema);
  std::vector<std::vector<int>> value_ids;
  for (const auto& dom : domains) value_ids.push_back(feature_value_ids(d, dom));

  struct Node {
    SlicePredicate predicate;
    std::vector<std::size_t> members;
    std::size_t last_domain;  // index into domains of the last literal
  };

  std::vector<CandidateSlice> results;
  std::size_t tested = 0;

  std::vector<Node> frontier;
  // level 1
  for (std::size_t di = 0; di < domains.size(); ++di) {
    const Domain& dom = domains[di];
    for (std::size_t v = 0; v < dom.values.size(); ++v) {
      Node node;
      node.predicate.literals.push_back(
          {schema.features[dom.feature_index].name, dom.values[v]});
      node.last_domain = di;
      for (std::size_t i = 0; i < d.size(); ++i)
        if (value_ids[di][i] == static_cast<int>(v)) node.members.push_back(i);
      if (node.members.size() < cfg.min_size) continue;
      if (node.members.size() < d.size()) {
        results.push_back(
            evaluate_candidate(node.predicate, node.members, losses));
        ++tested;
      }
      frontier.push_back(std::move(node));
    }
  }

  for (std::size_t level = 2;
       level <= cfg.max_literals && !frontier.empty(); ++level) {
    std::vector<Node> next;
    for (const Node& node : frontier) {
      for (std::size_t di = node.last_domain + 1; di < domains.size(); ++di) {
        const Domain& dom = domains[di];
        for (std::size_t v = 0; v < dom.values.size(); ++v) {
          Node child;
          child.predicate = node.predicate;
          child.predicate.literals.push_back(
              {schema.features[dom.feature_index].name, dom.values[v]});
          child.last_domain = di;
          for (std::size_t i : node.members)
            if (value_ids[di][i] == static_cast<int>(v))
              child.members.push_back(i);
          if (child.members.size() < cfg.min_size) continue;
          if (child.members.size() < d.size()) {
            results.push_back(
                evaluate_candidate(child.predicate, child.members, losses));
            ++tested;
          }
          next.push_back(std::move(child));
        }
      }
    }
    frontier = std::move(next);
  }

  if (candidates_tested) *candidates_tested = tested;
  finalize(results, tested, cfg, schema);
  return results;
}

std::vector<CandidateSlice> decision_tree_search(
    const Dataset& d, const std::vector<double>& losses,
    const SearchConfig& cfg, std::size_t* candidates_tested) {
  if (losses.size() != d.size())
    throw std::invalid_argument("losses are not aligned to the dataset");
  const Schema& schema = d.schema();
  const std::vector<Domain> domains = slice_domains(schema);
  std::vector<std::vector<int>> value_ids;
  for (const auto& dom : domains) value_ids.push_back(feature_value_ids(d, dom));

  const auto sse = [&](const std::vector<std::size_t>& members) {
    if (members.empty()) return 0.0;
    double mean = 0.0;
    for (std::size_t i : members) mean += losses[i];
    mean /= static_cast<double>(members.size());
    double ss = 0.0;
    for (std::size_t i : members)
      ss += (losses[i] - mean) * (losses[i] - mean);
    return ss;
  };

  struct Node {
    SlicePredicate predicate;  // positive literals along the path
    std::vector<std::size_t> members;
    std::size_t depth = 0;
    std::vector<std::size_t> used_domains;
  };

  std::vector<Node> leaves;
  std::vector<Node> queue;
  queue.push_back({SlicePredicate{}, {}, 0, {}});
  queue.back().members.resize(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) queue.back().members[i] = i;

  while (!queue.empty()) {
    Node node = std::move(queue.back());
    queue.pop_back();

    bool split_done = false;
    if (node.depth < cfg.max_literals && node.members.size() >= 2 * cfg.min_size) {
      const double parent_sse = sse(node.members);
      double best_gain = 1e-12;
      std::size_t best_domain = 0;
      int best_value = -1;
      std::vector<std::size_t> best_eq, best_ne;

      for (std::size_t di = 0; di < domains.size(); ++di) {
        if (std::find(node.used_domains.begin(), node.used_domains.end(), di) !=
            node.used_domains.end())
          continue;
        for (std::size_t v = 0; v < domains[di].values.size(); ++v) {
          std::vector<std::size_t> eq, ne;
          for (std::size_t i : node.members)
            (value_ids[di][i] == static_cast<int>(v) ? eq : ne).push_back(i);
          if (eq.size() < cfg.min_size || ne.size() < cfg.min_size) continue;
          const double gain = parent_sse - sse(eq) - sse(ne);
          if (gain > best_gain) {
            best_gain = gain;
            best_domain = di;
            best_value = static_cast<int>(v);
            best_eq = std::move(eq);
            best_ne = std::move(ne);
          }
        }
      }

      if (best_value >= 0) {
        Node eq_child;
        eq_child.predicate = node.predicate;
        eq_child.predicate.literals.push_back(
            {schema.features[domains[best_domain].feature_index].name,
             domains[best_domain].values[best_value]});
        eq_child.members = std::move(best_eq);
        eq_child.depth = node.depth + 1;
        eq_child.used_domains = node.used_domains;
        eq_child.used_domains.push_back(best_domain);

        Node ne_child;
        ne_child.predicate = node.predicate;  // negation is not expressible
        ne_child.members = std::move(best_ne);
        ne_child.depth = node.depth + 1;
        ne_child.used_domains = node.used_domains;

        queue.push_back(std::move(eq_child));
        queue.push_back(std::move(ne_child));
        split_done = true;
      }
    }
    if (!split_done) leaves.push_back(std::move(node));
  }

  std::vector<CandidateSlice> results;
  std::size_t tested = 0;
  for (const Node& leaf : leaves) {
    if (leaf.predicate.literals.empty()) continue;  // not an interpretable slice
    if (leaf.members.size() < cfg.min_size || leaf.members.size() >= d.size())
      continue;
    results.push_back(evaluate_candidate(leaf.predicate, leaf.members, losses));
    ++tested;
  }
  if (candidates_tested) *candidates_tested = tested;
  finalize(results, tested, cfg, schema);
  return results;
}

// ---- Report assembly -----------------------------------------------------------------

SliceReport find_problematic(const Dataset& d, const Classifier& model,
                             const SearchConfig& cfg, SearchStrategy strategy) {
  const std::vector<double> losses = per_example_losses(model.predict(d), d);
  SliceReport report;
  report.strategy = strategy;
  if (strategy == SearchStrategy::Tree) {
    report.slices = decision_tree_search(d, losses, cfg, &report.candidates_tested);
  } else {
    report.slices = lattice_search(d, losses, cfg, &report.candidates_tested);
  }
  return report;
}

StrategyComparison compare_strategies(const Dataset& d, const Classifier& model,
                                      const SearchConfig& cfg) {
  const std::vector<double> losses = per_example_losses(model.predict(d), d);
  StrategyComparison cmp;
  const auto lattice = lattice_search(d, losses, cfg);
  const auto tree = decision_tree_search(d, losses, cfg);
  cmp.lattice_count = lattice.size();
  cmp.tree_count = tree.size();
  for (const auto& t : tree) {
    for (const auto& l : lattice) {
      if (t.predicate == l.predicate) {
        ++cmp.shared_predicates;
        break;
      }
    }
  }
  return cmp;
}

json SliceReport::to_json(const Schema& schema) const {
  json slices_j = json::array();
  for (const auto& s : slices) {
    json sj;
    sj["predicate"] = s.predicate.to_string(schema);
    sj["size"] = s.members.size();
    sj["slice_loss"] = s.slice_loss;
    sj["complement_loss"] = s.complement_loss;
    sj["effect_size"] = s.effect;
    sj["p_value"] = s.p_value;
    sj["corrected_p"] = s.corrected_p;
    sj["impact"] = s.impact;
    slices_j.push_back(sj);
  }
  json j;
  j["strategy"] = strategy == SearchStrategy::Tree ? "tree" : "lattice";
  j["candidates_tested"] = candidates_tested;
  j["slices"] = slices_j;
  return j;
}

void SliceReport::print_table(std::ostream& os, const Schema& schema) const {
  os << "strategy: " << (strategy == SearchStrategy::Tree ? "tree" : "lattice")
     << ", candidates tested: " << candidates_tested << "\n";
  os << std::left << std::setw(40) << "predicate" << std::right << std::setw(8)
     << "size" << std::setw(12) << "loss" << std::setw(12) << "comp-loss"
     << std::setw(10) << "effect" << std::setw(12) << "p" << std::setw(12)
     << "impact" << "\n";
  for (const auto& s : slices) {
    os << std::left << std::setw(40) << s.predicate.to_string(schema)
       << std::right << std::setw(8) << s.members.size() << std::fixed
       << std::setprecision(4) << std::setw(12) << s.slice_loss << std::setw(12)
       << s.complement_loss << std::setw(10) << s.effect << std::scientific
       << std::setprecision(2) << std::setw(12) << s.corrected_p << std::fixed
       << std::setprecision(3) << std::setw(12) << s.impact << "\n";
    os.unsetf(std::ios::floatfield);
    os << std::setprecision(6);
  }
}

}  // namespace raikit
