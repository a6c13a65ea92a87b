#include <doctest.h>

#include <cmath>
#include <numeric>

#include "raikit/dataset.hpp"
#include "raikit/fairbatch.hpp"
#include "raikit/metrics.hpp"
#include "raikit/model.hpp"

using namespace raikit;

namespace {

Dataset balanced_dataset(std::size_t per_cell = 25) {
  Schema s;
  s.features = {{"g", FeatureKind::Categorical, {"z0", "z1"}, {}},
                {"x", FeatureKind::Numeric, {}, {}}};
  s.sensitive_feature = "g";
  std::vector<Example> rows;
  for (const auto& g : {std::string("z0"), std::string("z1")}) {
    for (int y = 0; y < 2; ++y) {
      for (std::size_t k = 0; k < per_cell; ++k) {
        Example e;
        e.values = {g, static_cast<double>(k)};
        e.label = y;
        rows.push_back(e);
      }
    }
  }
  return Dataset(std::move(s), std::move(rows));
}

FairnessReport report_with(double acc_z0_y0, double acc_z0_y1,
                           double acc_z1_y0, double acc_z1_y1,
                           double rate_z0 = 0.5, double rate_z1 = 0.5) {
  FairnessReport r;
  r.group_order = {"z0", "z1"};
  r.positive_rate["z0"] = rate_z0;
  r.positive_rate["z1"] = rate_z1;
  r.cell_accuracy["z0"] = {acc_z0_y0, acc_z0_y1};
  r.cell_accuracy["z1"] = {acc_z1_y0, acc_z1_y1};
  return r;
}

}  // namespace

TEST_CASE("init_rates") {
  SUBCASE("balanced data starts at one half") {
    const Dataset d = balanced_dataset();
    const SamplingRates rates = init_rates(d);
    CHECK(rates.lambda_y0 == doctest::Approx(0.5));
    CHECK(rates.lambda_y1 == doctest::Approx(0.5));
    CHECK(rates.label0_fraction == doctest::Approx(0.5));
  }
  SUBCASE("lambda matches the empirical conditional") {
    Schema s;
    s.features = {{"g", FeatureKind::Categorical, {"z0", "z1"}, {}}};
    s.sensitive_feature = "g";
    std::vector<Example> rows;
    // P(Z=z0 | Y=1) = 3/10; fill Y=0 with an even split
    for (int i = 0; i < 3; ++i) rows.push_back({{std::string("z0")}, 1, 1.0});
    for (int i = 0; i < 7; ++i) rows.push_back({{std::string("z1")}, 1, 1.0});
    for (int i = 0; i < 5; ++i) rows.push_back({{std::string("z0")}, 0, 1.0});
    for (int i = 0; i < 5; ++i) rows.push_back({{std::string("z1")}, 0, 1.0});
    const Dataset d(std::move(s), std::move(rows));
    const SamplingRates rates = init_rates(d);
    CHECK(rates.lambda_y1 == doctest::Approx(0.3));
    CHECK(rates.lambda_y0 == doctest::Approx(0.5));
  }
  SUBCASE("empty cell is rejected") {
    Schema s;
    s.features = {{"g", FeatureKind::Categorical, {"z0", "z1"}, {}}};
    s.sensitive_feature = "g";
    std::vector<Example> rows = {{{std::string("z0")}, 1, 1.0},
                                 {{std::string("z1")}, 0, 1.0},
                                 {{std::string("z1")}, 1, 1.0}};
    const Dataset d(std::move(s), std::move(rows));
    CHECK_THROWS_AS(init_rates(d), std::invalid_argument);
  }
}

TEST_CASE("update_rates") {
  FairBatchConfig cfg;
  cfg.alpha = 0.01;
  SamplingRates rates{0.5, 0.5, 0.5};

  SUBCASE("equal accuracies are a fixed point") {
    const auto next = update_rates(rates, report_with(0.9, 0.8, 0.9, 0.8), cfg);
    CHECK(next.lambda_y0 == rates.lambda_y0);
    CHECK(next.lambda_y1 == rates.lambda_y1);
  }
  SUBCASE("underperforming z0 on y=1 raises lambda2 by alpha") {
    const auto next = update_rates(rates, report_with(0.9, 0.6, 0.9, 0.9), cfg);
    CHECK(next.lambda_y1 == doctest::Approx(0.51));
    CHECK(next.lambda_y0 == doctest::Approx(0.5));
  }
  SUBCASE("overperforming z0 on y=0 lowers lambda1 by alpha") {
    const auto next = update_rates(rates, report_with(0.95, 0.8, 0.7, 0.8), cfg);
    CHECK(next.lambda_y0 == doctest::Approx(0.49));
  }
  SUBCASE("clipping holds at the bounds") {
    rates.lambda_y1 = 1.0;
    const auto next = update_rates(rates, report_with(0.9, 0.6, 0.9, 0.9), cfg);
    CHECK(next.lambda_y1 == 1.0);
  }
  SUBCASE("dp mode steps both lambdas together") {
    const auto next =
        update_rates(rates, report_with(0.9, 0.9, 0.9, 0.9, 0.3, 0.6), cfg);
    CHECK(next.lambda_y0 == doctest::Approx(0.51));
    CHECK(next.lambda_y1 == doctest::Approx(0.51));
    cfg.target = FairnessTarget::DemographicParity;
    const auto dp_next =
        update_rates(rates, report_with(0.9, 0.9, 0.9, 0.9, 0.3, 0.6), cfg);
    CHECK(dp_next.lambda_y0 == doctest::Approx(0.51));
  }
  SUBCASE("rates stay in [0,1] under any update sequence") {
    SamplingRates r{0.02, 0.98, 0.5};
    for (int i = 0; i < 500; ++i) {
      r = update_rates(r, report_with(0.5, 0.9, 0.9, 0.5), cfg);
      CHECK(r.lambda_y0 >= 0.0);
      CHECK(r.lambda_y0 <= 1.0);
      CHECK(r.lambda_y1 >= 0.0);
      CHECK(r.lambda_y1 <= 1.0);
    }
  }
}

TEST_CASE("fairbatch sampler composition") {
  const Dataset d = balanced_dataset();

  SUBCASE("cell counts sum to the batch size") {
    for (std::size_t batch : {4, 7, 16, 33}) {
      auto sampler = make_fairbatch_sampler(d, {}, batch, 3);
      const auto counts = sampler->cell_counts();
      CHECK(counts[0] + counts[1] + counts[2] + counts[3] == batch);
    }
  }
  SUBCASE("batch size below 4 is rejected") {
    CHECK_THROWS_AS(make_fairbatch_sampler(d, {}, 3, 1), std::invalid_argument);
  }
  SUBCASE("alpha 0 equals stratified sampling bit for bit") {
    FairBatchConfig cfg;
    cfg.alpha = 0.0;
    auto fair = make_fairbatch_sampler(d, cfg, 16, 7);
    auto strat = make_stratified_sampler(d, 16, 7);
    FairnessReport feedback = report_with(0.9, 0.8, 0.7, 0.6);
    for (std::size_t epoch = 0; epoch < 5; ++epoch) {
      for (std::size_t step = 0; step < fair->batches_per_epoch(); ++step) {
        const auto a = fair->next_batch(epoch, step, &feedback);
        const auto b = strat->next_batch(epoch, step, nullptr);
        CHECK(a == b);
      }
    }
  }
  SUBCASE("trajectory length equals the number of epochs") {
    auto sampler = make_fairbatch_sampler(d, {}, 8, 5);
    FairnessReport feedback = report_with(0.9, 0.8, 0.7, 0.6);
    const std::size_t epochs = 7;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch)
      for (std::size_t step = 0; step < sampler->batches_per_epoch(); ++step)
        sampler->next_batch(epoch, step, &feedback);
    CHECK(sampler->trajectory().size() == epochs);
  }
  SUBCASE("each update moves lambda by at most alpha") {
    FairBatchConfig cfg;
    cfg.alpha = 0.02;
    auto sampler = make_fairbatch_sampler(d, cfg, 8, 5);
    FairnessReport feedback = report_with(0.5, 0.9, 0.9, 0.5);
    double prev0 = sampler->rates().lambda_y0;
    double prev1 = sampler->rates().lambda_y1;
    for (std::size_t epoch = 0; epoch < 10; ++epoch) {
      sampler->next_batch(epoch, 0, &feedback);
      CHECK(std::abs(sampler->rates().lambda_y0 - prev0) <= cfg.alpha + 1e-15);
      CHECK(std::abs(sampler->rates().lambda_y1 - prev1) <= cfg.alpha + 1e-15);
      prev0 = sampler->rates().lambda_y0;
      prev1 = sampler->rates().lambda_y1;
    }
  }
}

TEST_CASE("lambda path csv") {
  std::vector<LambdaTrajectoryRow> rows = {{0, 0.5, 0.5, 0.2},
                                           {1, 0.51, 0.5, 0.15}};
  const std::string csv = lambda_path_csv(rows);
  CHECK(csv.rfind("epoch,lambda1,lambda2,disparity\n", 0) == 0);
  CHECK(csv.find("1,0.51,0.5,0.15") != std::string::npos);
}
