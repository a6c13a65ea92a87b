#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "raikit/dataset.hpp"
#include "raikit/metrics.hpp"
#include "raikit/rng.hpp"

using namespace raikit;

namespace {

/// Predictions of the threshold "positive when X > t" on the fig2 fixture.
std::vector<int> fig2_preds(const Dataset& d, double t) {
  std::vector<int> preds(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) preds[i] = d.numeric(i, 0) > t;
  return preds;
}

Dataset two_group_dataset(const std::vector<std::string>& groups,
                          const std::vector<int>& labels,
                          const std::vector<double>& weights = {}) {
  Schema s;
  s.features = {{"g", FeatureKind::Categorical, {"z0", "z1"}, {}}};
  s.sensitive_feature = "g";
  std::vector<Example> rows;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    Example e;
    e.values = {groups[i]};
    e.label = labels[i];
    e.weight = weights.empty() ? 1.0 : weights[i];
    rows.push_back(e);
  }
  return Dataset(std::move(s), std::move(rows));
}

}  // namespace

TEST_CASE("demographic parity") {
  const Dataset d = make_fig2_fixture();

  SUBCASE("accurate classifier on the fixture scores 0.5") {
    CHECK(demographic_parity(fig2_preds(d, 4.5), d) == doctest::Approx(0.5));
  }
  SUBCASE("all-positive predictions score 1") {
    CHECK(demographic_parity(std::vector<int>(10, 1), d) == 1.0);
  }
  SUBCASE("rates 0.3 vs 0.6 score 0.5") {
    // 10 z0 with 3 positives, 10 z1 with 6 positives
    std::vector<std::string> groups;
    std::vector<int> labels(20, 0);
    std::vector<int> preds;
    for (int i = 0; i < 10; ++i) groups.push_back("z0");
    for (int i = 0; i < 10; ++i) groups.push_back("z1");
    for (int i = 0; i < 10; ++i) preds.push_back(i < 3 ? 1 : 0);
    for (int i = 0; i < 10; ++i) preds.push_back(i < 6 ? 1 : 0);
    const Dataset d2 = two_group_dataset(groups, labels);
    CHECK(demographic_parity(preds, d2) == doctest::Approx(0.5));
  }
  SUBCASE("both rates zero score 1, one rate zero scores 0") {
    CHECK(demographic_parity(std::vector<int>(10, 0), d) == 1.0);
    std::vector<int> only_b(10, 0);
    only_b[9] = 1;  // position 10 is black
    CHECK(demographic_parity(only_b, d) == 0.0);
  }
  SUBCASE("symmetric under group relabeling") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<std::string> groups;
      std::vector<int> labels, preds;
      for (int i = 0; i < 30; ++i) {
        groups.push_back(rng.bernoulli(0.5) ? "z0" : "z1");
        labels.push_back(rng.bernoulli(0.5));
        preds.push_back(rng.bernoulli(0.5));
      }
      groups[0] = "z0";
      groups[1] = "z1";  // both groups present
      const Dataset a = two_group_dataset(groups, labels);
      std::vector<std::string> swapped;
      for (const auto& g : groups) swapped.push_back(g == "z0" ? "z1" : "z0");
      const Dataset b = two_group_dataset(swapped, labels);
      CHECK(demographic_parity(preds, a) ==
            doctest::Approx(demographic_parity(preds, b)));
    }
  }
  SUBCASE("dp is in [0,1] and 1 iff rates match") {
    const double dp = demographic_parity(fig2_preds(d, 2.5), d);
    CHECK(dp == 1.0);  // fair cut: both rates 0.8
  }
}

TEST_CASE("equalized odds disparity") {
  const Dataset d = make_fig2_fixture();

  SUBCASE("perfect classifier has zero disparity") {
    std::vector<int> preds(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) preds[i] = d.label(i);
    CHECK(equalized_odds_disparity(preds, d) == 0.0);
  }
  SUBCASE("group-constant predictions give disparity 1") {
    std::vector<std::string> groups = {"z0", "z0", "z0", "z0",
                                       "z1", "z1", "z1", "z1"};
    std::vector<int> labels = {0, 0, 1, 1, 0, 0, 1, 1};
    std::vector<int> preds = {1, 1, 1, 1, 0, 0, 0, 0};
    const Dataset d2 = two_group_dataset(groups, labels);
    CHECK(equalized_odds_disparity(preds, d2) == 1.0);
  }
  SUBCASE("fair clean classifier on the fixture: exact enumeration") {
    // positives are positions 3..10; white Y=0 = {1,3,4} with rates 2/3,
    // black Y=0 = {2} with rate 0; both groups predict 1 on every Y=1
    const auto preds = fig2_preds(d, 2.5);
    CHECK(equalized_odds_disparity(preds, d) == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("invariant under flipping group identity") {
    const auto preds = fig2_preds(d, 4.5);
    const double base = equalized_odds_disparity(preds, d);
    Schema s = d.schema();
    s.features[1].vocabulary = {"b", "w"};  // swap declaration order
    const Dataset swapped(std::move(s), d.examples());
    CHECK(equalized_odds_disparity(preds, swapped) == doctest::Approx(base));
  }
  SUBCASE("empty cell is an error naming the cell") {
    std::vector<std::string> groups = {"z0", "z0", "z1", "z1"};
    std::vector<int> labels = {0, 0, 0, 1};  // no (z0, y=1) cell
    const Dataset d2 = two_group_dataset(groups, labels);
    CHECK_THROWS_WITH_AS(
        equalized_odds_disparity(std::vector<int>{0, 0, 0, 0}, d2),
        doctest::Contains("z0"), std::invalid_argument);
  }
}

TEST_CASE("accuracy") {
  const Dataset clean = make_fig2_fixture();

  SUBCASE("fair clean classifier scores 0.8") {
    CHECK(accuracy(fig2_preds(clean, 2.5), clean, true) == doctest::Approx(0.8));
  }
  SUBCASE("fair-on-poisoned classifier scores 0.6 on clean data") {
    CHECK(accuracy(fig2_preds(clean, 8.5), clean, true) == doctest::Approx(0.6));
  }
  SUBCASE("predictions equal to labels score 1") {
    std::vector<int> preds(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) preds[i] = clean.label(i);
    CHECK(accuracy(preds, clean, true) == 1.0);
  }
  SUBCASE("accuracy + error rate = 1 under uniform weights") {
    const auto preds = fig2_preds(clean, 6.5);
    double errors = 0;
    for (std::size_t i = 0; i < clean.size(); ++i)
      errors += preds[i] != clean.label(i);
    CHECK(accuracy(preds, clean, false) + errors / clean.size() ==
          doctest::Approx(1.0));
  }
}

TEST_CASE("weighted positive rate") {
  std::vector<std::string> groups = {"z0", "z0", "z1"};
  std::vector<int> labels = {1, 0, 0};
  std::vector<double> weights = {2.0, 6.0, 1.0};
  const Dataset d = two_group_dataset(groups, labels, weights);
  CHECK(weighted_positive_rate(d, "z0") == doctest::Approx(0.25));
  CHECK(weighted_positive_rate(d, "z1") == 0.0);
  CHECK_THROWS_AS(weighted_positive_rate(d, "zz"), std::invalid_argument);
}

TEST_CASE("logistic loss") {
  const Dataset d = make_fig2_fixture();

  SUBCASE("probability one half gives ln 2") {
    const std::vector<double> probs(d.size(), 0.5);
    CHECK(logistic_loss(probs, d, true) == doctest::Approx(std::log(2.0)));
  }
  SUBCASE("confident correct predictions hit the clamp floor") {
    std::vector<double> probs(d.size());
    for (std::size_t i = 0; i < d.size(); ++i)
      probs[i] = d.label(i) == 1 ? 1.0 : 0.0;
    CHECK(logistic_loss(probs, d, true) ==
          doctest::Approx(-std::log(1.0 - kProbClamp)));
  }
  SUBCASE("uniform weight scaling leaves the weighted mean unchanged") {
    std::vector<double> probs(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) probs[i] = 0.2 + 0.05 * i;
    std::vector<Example> doubled = d.examples();
    for (auto& e : doubled) e.weight *= 2.0;
    const Dataset d2 = d.with_examples(std::move(doubled));
    CHECK(logistic_loss(probs, d, true) ==
          doctest::Approx(logistic_loss(probs, d2, true)));
  }
  SUBCASE("per-example losses aggregate to the scalar loss") {
    std::vector<double> probs(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) probs[i] = 0.15 + 0.07 * i;
    const auto losses = per_example_losses(probs, d);
    double weighted = 0, total = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      weighted += d.weight(i) * losses[i];
      total += d.weight(i);
    }
    CHECK(std::abs(weighted / total - logistic_loss(probs, d, true)) < 1e-12);
  }
}

TEST_CASE("equalized error rate gap") {
  CHECK(equalized_error_rate_gap({0.4, 0.4, 0.4}) == 0.0);
  CHECK(equalized_error_rate_gap({0.2, 0.5, 0.3}) == doctest::Approx(0.3));
  CHECK(equalized_error_rate_gap({0.7}) == 0.0);
  CHECK_THROWS_AS(equalized_error_rate_gap({}), std::invalid_argument);
}

TEST_CASE("fairness report carries rates and cell accuracies") {
  const Dataset d = make_fig2_fixture();
  const auto preds = fig2_preds(d, 4.5);
  const FairnessReport report = fairness_report(preds, d);
  CHECK(report.dp == doctest::Approx(0.5));
  CHECK(report.accuracy == doctest::Approx(1.0));
  CHECK(report.positive_rate.at("w") == doctest::Approx(0.4));
  CHECK(report.positive_rate.at("b") == doctest::Approx(0.8));
  CHECK(report.eo_disparity == doctest::Approx(0.0));
  CHECK(report.group_order == std::vector<std::string>{"w", "b"});
  const auto j = report.to_json();
  CHECK(j.at("dp").get<double>() == doctest::Approx(0.5));
  CHECK(j.at("positive_rate_w").get<double>() == doctest::Approx(0.4));
}
