#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "raikit/dataset.hpp"
#include "raikit/metrics.hpp"
#include "raikit/model.hpp"
#include "raikit/rng.hpp"
#include "raikit/slicefinder.hpp"

using namespace raikit;

namespace {

/// Small categorical dataset: features f0..f{k-1} with v values each,
/// labels assigned by the caller.
Dataset categorical_dataset(std::size_t n, std::size_t features,
                            std::size_t values, std::uint64_t seed) {
  Schema s;
  for (std::size_t f = 0; f < features; ++f) {
    FeatureDecl decl;
    decl.name = "f" + std::to_string(f);
    decl.kind = FeatureKind::Categorical;
    for (std::size_t v = 0; v < values; ++v)
      decl.vocabulary.push_back("v" + std::to_string(v));
    s.features.push_back(decl);
  }
  s.sensitive_feature = "f0";
  Rng rng(seed);
  std::vector<Example> rows;
  for (std::size_t i = 0; i < n; ++i) {
    Example e;
    for (std::size_t f = 0; f < features; ++f)
      e.values.emplace_back("v" + std::to_string(rng.below(values)));
    e.label = rng.bernoulli(0.5);
    rows.push_back(std::move(e));
  }
  return Dataset(std::move(s), std::move(rows));
}

/// Exhaustive oracle: enumerate every predicate with up to L literals by
/// brute force over feature subsets and value tuples.
std::vector<SlicePredicate> enumerate_all_predicates(const Schema& schema,
                                                     std::size_t max_literals) {
  std::vector<SlicePredicate> out;
  const std::size_t f_count = schema.features.size();
  std::vector<std::size_t> chosen;
  const auto values_of = [&](std::size_t f) {
    return schema.features[f].vocabulary;
  };
  const std::function<void(std::size_t, SlicePredicate&)> extend =
      [&](std::size_t start, SlicePredicate& p) {
        if (!p.literals.empty()) out.push_back(p);
        if (p.literals.size() == max_literals) return;
        for (std::size_t f = start; f < f_count; ++f) {
          for (const auto& v : values_of(f)) {
            p.literals.push_back({schema.features[f].name, v});
            extend(f + 1, p);
            p.literals.pop_back();
          }
        }
      };
  SlicePredicate p;
  extend(0, p);
  return out;
}

}  // namespace

TEST_CASE("effect size") {
  SUBCASE("identical distributions score 0") {
    std::vector<double> a = {1.0, 2.0, 3.0, 4.0};
    CHECK(effect_size(a, a) == 0.0);
  }
  SUBCASE("degenerate zero-variance unequal means hit the sentinel") {
    std::vector<double> ones(5, 1.0), zeros(9, 0.0);
    CHECK(std::isinf(effect_size(ones, zeros)));
    CHECK(effect_size(ones, zeros) > 0);
  }
  SUBCASE("seeded gaussian simulation lands near the analytic value") {
    Rng rng(123);
    std::vector<double> slice, comp;
    for (int i = 0; i < 200; ++i) slice.push_back(rng.normal(1.0, 1.0));
    for (int i = 0; i < 800; ++i) comp.push_back(rng.normal(0.0, 1.0));
    CHECK(effect_size(slice, comp) == doctest::Approx(1.0).epsilon(0.15));
  }
  SUBCASE("antisymmetric under swapping the sides") {
    Rng rng(5);
    std::vector<double> a, b;
    for (int i = 0; i < 40; ++i) a.push_back(rng.uniform());
    for (int i = 0; i < 60; ++i) b.push_back(rng.uniform() + 0.3);
    CHECK(effect_size(a, b) == doctest::Approx(-effect_size(b, a)));
  }
}

TEST_CASE("significance test") {
  SUBCASE("identical lists give p = 1") {
    std::vector<double> a = {0.5, 0.5, 0.5};
    CHECK(significance_test(a, a) == doctest::Approx(1.0));
  }
  SUBCASE("clearly separated samples give a vanishing p") {
    Rng rng(9);
    std::vector<double> lo, hi;
    for (int i = 0; i < 100; ++i) lo.push_back(rng.normal(0.0, 0.1));
    for (int i = 0; i < 100; ++i) hi.push_back(rng.normal(1.0, 0.1));
    CHECK(significance_test(hi, lo) < 1e-10);
  }
  SUBCASE("frozen Welch reference values") {
    // cross-checked against an independent statistics package
    const std::vector<double> x = {1.1, 2.3, 1.9, 0.8, 1.5};
    const std::vector<double> y = {2.0, 2.9, 3.1, 2.5};
    CHECK(significance_test(x, y) == doctest::Approx(0.018652).epsilon(1e-4));
  }
  SUBCASE("sample below two values is rejected") {
    std::vector<double> one = {1.0}, two = {1.0, 2.0};
    CHECK_THROWS_AS(significance_test(one, two), std::invalid_argument);
  }
}

TEST_CASE("t distribution spot values against a quadrature oracle") {
  // adaptive-Simpson integration of the t density as the independent check
  const auto t_pdf = [](double x, double df) {
    return std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) /
           std::sqrt(df * M_PI) * std::pow(1 + x * x / df, -(df + 1) / 2);
  };
  const auto simpson = [&](double lo, double hi, double df, int steps) {
    double sum = 0.0;
    const double h = (hi - lo) / steps;
    for (int i = 0; i < steps; ++i) {
      const double a = lo + i * h, b = a + h;
      sum += (b - a) / 6.0 *
             (t_pdf(a, df) + 4.0 * t_pdf(0.5 * (a + b), df) + t_pdf(b, df));
    }
    return sum;
  };

  CHECK(student_t_cdf(2.086, 20) == doctest::Approx(0.975).epsilon(1e-3));
  const double integral = 0.5 + simpson(0.0, 2.086, 20, 4000);
  CHECK(student_t_cdf(2.086, 20) == doctest::Approx(integral).epsilon(1e-6));
  for (double t : {-2.5, -0.7, 0.0, 1.2, 3.4}) {
    for (double df : {3.0, 11.0, 25.0}) {
      const double integral2 =
          t >= 0 ? 0.5 + simpson(0.0, t, df, 4000) : 0.5 - simpson(t, 0.0, df, 4000);
      CHECK(student_t_cdf(t, df) == doctest::Approx(integral2).epsilon(1e-6));
    }
  }
}

TEST_CASE("lattice search") {
  const std::size_t n = 400;
  Dataset d = categorical_dataset(n, 3, 3, 11);

  SUBCASE("perfect model yields no problematic slices") {
    const std::vector<double> losses(n, 1e-7);
    SearchConfig cfg;
    cfg.min_size = 20;
    const auto found = lattice_search(d, losses, cfg);
    CHECK(found.empty());
  }
  SUBCASE("single-literal level lists exactly the large-enough predicates") {
    Rng rng(3);
    std::vector<double> losses;
    for (std::size_t i = 0; i < n; ++i) losses.push_back(rng.uniform());
    SearchConfig cfg;
    cfg.max_literals = 1;
    cfg.min_size = 20;
    cfg.effect_threshold = -100.0;  // keep everything
    cfg.alpha = 1.0;
    cfg.max_results = 1000;
    std::size_t tested = 0;
    const auto found = lattice_search(d, losses, cfg, &tested);
    std::size_t expected = 0;
    for (std::size_t f = 0; f < 3; ++f) {
      for (std::size_t v = 0; v < 3; ++v) {
        SlicePredicate p{{{"f" + std::to_string(f), "v" + std::to_string(v)}}};
        const auto members = apply_slice(d, p).first.members.size();
        if (members >= cfg.min_size && members < d.size()) ++expected;
      }
    }
    CHECK(tested == expected);
    CHECK(found.size() == expected);
  }
  SUBCASE("completeness: candidate count matches the closed form") {
    // every predicate evaluated exactly once; with min_size 0-like floor
    // the count equals all predicates with at most L literals that are
    // non-empty... use the exhaustive enumeration as the oracle
    Rng rng(4);
    std::vector<double> losses;
    for (std::size_t i = 0; i < n; ++i) losses.push_back(rng.uniform());
    SearchConfig cfg;
    cfg.max_literals = 3;
    cfg.min_size = 5;
    std::size_t tested = 0;
    lattice_search(d, losses, cfg, &tested);
    std::size_t expected = 0;
    for (const auto& p : enumerate_all_predicates(d.schema(), 3)) {
      const auto members = apply_slice(d, p).first.members.size();
      if (members >= cfg.min_size && members < d.size()) ++expected;
    }
    CHECK(tested == expected);
  }
  SUBCASE("lattice equals the exhaustive oracle on a small schema") {
    // plant a weak region so some slices are genuinely problematic
    std::vector<double> losses;
    Rng rng(8);
    const int f0 = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const bool planted = d.categorical(i, f0) == "v1";
      losses.push_back(std::max(0.01, (planted ? 1.2 : 0.4) + 0.1 * rng.normal()));
    }
    SearchConfig cfg;
    cfg.max_literals = 3;
    cfg.min_size = 25;
    cfg.max_results = 1000;

    std::size_t tested = 0;
    const auto found = lattice_search(d, losses, cfg, &tested);

    // oracle: evaluate every predicate independently with the same stats
    std::vector<std::pair<std::string, double>> oracle;
    std::size_t oracle_tested = 0;
    std::vector<std::pair<SlicePredicate, std::vector<std::size_t>>> kept;
    for (const auto& p : enumerate_all_predicates(d.schema(), cfg.max_literals)) {
      const auto members = apply_slice(d, p).first.members;
      if (members.size() < cfg.min_size || members.size() >= d.size()) continue;
      ++oracle_tested;
      kept.push_back({p, members});
    }
    REQUIRE(oracle_tested == tested);
    for (const auto& [p, members] : kept) {
      std::set<std::size_t> in(members.begin(), members.end());
      std::vector<double> sl, co;
      for (std::size_t i = 0; i < d.size(); ++i)
        (in.count(i) ? sl : co).push_back(losses[i]);
      const double phi = effect_size(sl, co);
      const double praw = significance_test(sl, co);
      if (phi >= cfg.effect_threshold &&
          std::min(1.0, praw * oracle_tested) <= cfg.alpha) {
        double ssum = 0, csum = 0;
        for (double v : sl) ssum += v;
        for (double v : co) csum += v;
        oracle.push_back({p.to_string(d.schema()),
                          members.size() * (ssum / sl.size() - csum / co.size())});
      }
    }
    CHECK(found.size() == oracle.size());
    std::set<std::string> found_keys, oracle_keys;
    for (const auto& c : found)
      found_keys.insert(c.predicate.to_string(d.schema()));
    for (const auto& [k, impact] : oracle) oracle_keys.insert(k);
    CHECK(found_keys == oracle_keys);
  }
  SUBCASE("monotone filtering: tightening thresholds never adds results") {
    std::vector<double> losses;
    Rng rng(13);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const bool weak = d.categorical(i, 1) == "v2";
      losses.push_back(std::max(0.01, (weak ? 0.9 : 0.4) + 0.2 * rng.normal()));
    }
    SearchConfig cfg;
    cfg.min_size = 25;
    cfg.max_results = 1000;
    const auto base = lattice_search(d, losses, cfg);
    SearchConfig tight = cfg;
    tight.effect_threshold = cfg.effect_threshold + 0.3;
    const auto fewer_t = lattice_search(d, losses, tight);
    CHECK(fewer_t.size() <= base.size());
    SearchConfig strict = cfg;
    strict.alpha = cfg.alpha / 100.0;
    const auto fewer_a = lattice_search(d, losses, strict);
    CHECK(fewer_a.size() <= base.size());
  }
}

TEST_CASE("decision tree search") {
  const std::size_t n = 600;

  SUBCASE("perfect model yields nothing") {
    Dataset d = categorical_dataset(n, 3, 3, 21);
    const std::vector<double> losses(n, 1e-7);
    SearchConfig cfg;
    cfg.min_size = 30;
    CHECK(decision_tree_search(d, losses, cfg).empty());
  }
  SUBCASE("planted single-literal slice is found at depth 1") {
    Dataset d = categorical_dataset(n, 3, 3, 22);
    std::vector<double> losses;
    Rng rng(22);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const bool planted = d.categorical(i, 2) == "v0";
      losses.push_back(std::max(0.01, (planted ? 1.5 : 0.3) + 0.05 * rng.normal()));
    }
    SearchConfig cfg;
    cfg.min_size = 30;
    const auto found = decision_tree_search(d, losses, cfg);
    REQUIRE(!found.empty());
    CHECK(found[0].predicate.literals.size() == 1);
    CHECK(found[0].predicate.literals[0].feature == "f2");
    CHECK(std::get<std::string>(found[0].predicate.literals[0].value) == "v0");
  }
  SUBCASE("tree outputs are pairwise disjoint") {
    Dataset d = categorical_dataset(n, 4, 3, 23);
    std::vector<double> losses;
    Rng rng(23);
    for (std::size_t i = 0; i < d.size(); ++i) {
      double base = 0.3;
      if (d.categorical(i, 0) == "v0") base += 0.8;
      if (d.categorical(i, 1) == "v1") base += 0.5;
      losses.push_back(std::max(0.01, base + 0.1 * rng.normal()));
    }
    SearchConfig cfg;
    cfg.min_size = 30;
    cfg.effect_threshold = 0.1;
    cfg.alpha = 0.5;
    cfg.max_results = 100;
    const auto found = decision_tree_search(d, losses, cfg);
    for (std::size_t i = 0; i < found.size(); ++i) {
      std::set<std::size_t> a(found[i].members.begin(), found[i].members.end());
      for (std::size_t j = i + 1; j < found.size(); ++j)
        for (std::size_t m : found[j].members) CHECK(!a.count(m));
    }
  }
}

TEST_CASE("find_problematic dispatch and report") {
  SyntheticSpec spec;
  spec.groups = {"z0", "z1"};
  spec.group_sizes = {150, 150};
  spec.positive_rates = {0.5, 0.5};
  spec.feature_count = 1;
  spec.cells = {{SyntheticCell{{-2.0}, 1.0}, SyntheticCell{{2.0}, 1.0}},
                {SyntheticCell{{-2.0}, 1.0}, SyntheticCell{{2.0}, 1.0}}};
  spec.bin_edges = {-8.0, 0.0, 8.0};
  const Dataset d = gen_synthetic(spec, 31);
  TrainConfig tc;
  tc.epochs = 30;
  tc.learning_rate = 0.5;
  const Classifier model = train_sgd(d, tc);

  SearchConfig cfg;
  cfg.min_size = 20;
  SUBCASE("strategy tree equals decision_tree_search output") {
    const auto report = find_problematic(d, model, cfg, SearchStrategy::Tree);
    const auto losses = per_example_losses(model.predict(d), d);
    const auto direct = decision_tree_search(d, losses, cfg);
    CHECK(report.slices.size() == direct.size());
    for (std::size_t i = 0; i < direct.size(); ++i)
      CHECK(report.slices[i].predicate == direct[i].predicate);
  }
  SUBCASE("k = 1 caps the report at one slice") {
    cfg.max_results = 1;
    cfg.effect_threshold = -10.0;
    cfg.alpha = 1.0;
    const auto report = find_problematic(d, model, cfg, SearchStrategy::Lattice);
    CHECK(report.slices.size() <= 1);
  }
}
