#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "raikit/dataset.hpp"
#include "raikit/metrics.hpp"
#include "raikit/model.hpp"
#include "raikit/rng.hpp"

using namespace raikit;

namespace {

SyntheticSpec separable_spec(std::size_t per_group = 100) {
  SyntheticSpec spec;
  spec.groups = {"z0", "z1"};
  spec.group_sizes = {per_group, per_group};
  spec.positive_rates = {0.5, 0.5};
  spec.feature_count = 2;
  spec.cells = {{SyntheticCell{{-3.0}, 0.5}, SyntheticCell{{3.0}, 0.5}},
                {SyntheticCell{{-3.0}, 0.5}, SyntheticCell{{3.0}, 0.5}}};
  return spec;
}

/// Central finite differences of the summed weighted batch loss.
NetGrad fd_gradient(const Net& net, const EncodedData& X, const Dataset& d,
                    std::span<const std::size_t> batch, double step = 1e-5) {
  nlohmann::json params = net.to_json();
  NetGrad g;
  const auto eval = [&](const nlohmann::json& j) {
    return batch_loss(Net::from_json(j), X, d, batch);
  };
  const auto diff_vec = [&](const char* key, std::vector<double>& out) {
    out.clear();
    for (std::size_t k = 0; k < params.at(key).size(); ++k) {
      nlohmann::json plus = params, minus = params;
      plus[key][k] = params[key][k].get<double>() + step;
      minus[key][k] = params[key][k].get<double>() - step;
      out.push_back((eval(plus) - eval(minus)) / (2.0 * step));
    }
  };
  diff_vec("w1", g.w1);
  diff_vec("b1", g.b1);
  diff_vec("w2", g.w2);
  nlohmann::json plus = params, minus = params;
  plus["b2"] = params["b2"].get<double>() + step;
  minus["b2"] = params["b2"].get<double>() - step;
  g.b2 = (eval(plus) - eval(minus)) / (2.0 * step);
  return g;
}

double max_rel_error(const NetGrad& a, const NetGrad& b) {
  double worst = 0.0;
  const auto cmp = [&](double x, double y) {
    const double scale = std::max({std::abs(x), std::abs(y), 1e-6});
    worst = std::max(worst, std::abs(x - y) / scale);
  };
  for (std::size_t i = 0; i < a.w1.size(); ++i) cmp(a.w1[i], b.w1[i]);
  for (std::size_t i = 0; i < a.b1.size(); ++i) cmp(a.b1[i], b.b1[i]);
  for (std::size_t i = 0; i < a.w2.size(); ++i) cmp(a.w2[i], b.w2[i]);
  cmp(a.b2, b.b2);
  return worst;
}

}  // namespace

TEST_CASE("analytic gradient matches central finite differences") {
  const Dataset d = gen_synthetic(separable_spec(20), 17);
  Encoder enc(d.schema(), false);
  const EncodedData X = encode_dataset(enc, d);

  for (std::size_t hidden : {std::size_t{0}, std::size_t{4}}) {
    Rng rng(mix_seed(99, hidden));
    for (int trial = 0; trial < 50; ++trial) {
      Rng init(rng.next_u64());
      const Net net = Net::init({enc.dim(), hidden}, init);
      std::vector<std::size_t> batch;
      const std::size_t bsz = 1 + rng.below(8);
      for (std::size_t k = 0; k < bsz; ++k) batch.push_back(rng.below(d.size()));
      const NetGrad analytic = batch_gradient(net, X, d, batch);
      const NetGrad numeric = fd_gradient(net, X, d, batch);
      CHECK(max_rel_error(analytic, numeric) < 1e-4);
    }
  }
}

TEST_CASE("gradient weight semantics") {
  const Dataset d = gen_synthetic(separable_spec(10), 21);
  Encoder enc(d.schema(), false);
  const EncodedData X = encode_dataset(enc, d);
  Rng init(5);
  const Net net = Net::init({enc.dim(), 0}, init);

  SUBCASE("zero-weight batch gives a zero gradient") {
    std::vector<Example> rows = d.examples();
    for (auto& e : rows) e.weight = 0.0;
    const Dataset zeroed = d.with_examples(std::move(rows));
    const std::vector<std::size_t> batch = {0, 3, 5};
    const NetGrad g = batch_gradient(net, X, zeroed, batch);
    for (double v : g.w2) CHECK(v == 0.0);
    CHECK(g.b2 == 0.0);
  }
  SUBCASE("duplicated example equals doubled weight") {
    std::vector<Example> rows = d.examples();
    rows[2].weight = 2.0;
    const Dataset doubled = d.with_examples(std::move(rows));
    const std::vector<std::size_t> twice = {2, 2};
    const std::vector<std::size_t> once = {2};
    const NetGrad a = batch_gradient(net, X, d, twice);
    const NetGrad b = batch_gradient(net, X, doubled, once);
    for (std::size_t i = 0; i < a.w2.size(); ++i)
      CHECK(a.w2[i] == doctest::Approx(b.w2[i]));
    CHECK(a.b2 == doctest::Approx(b.b2));
  }
  SUBCASE("scaling all weights by c scales the gradient by c") {
    std::vector<Example> rows = d.examples();
    for (auto& e : rows) e.weight *= 3.0;
    const Dataset scaled = d.with_examples(std::move(rows));
    const std::vector<std::size_t> batch = {1, 4, 7, 9};
    const NetGrad a = batch_gradient(net, X, d, batch);
    const NetGrad b = batch_gradient(net, X, scaled, batch);
    for (std::size_t i = 0; i < a.w2.size(); ++i)
      CHECK(3.0 * a.w2[i] == doctest::Approx(b.w2[i]));
  }
}

TEST_CASE("train_sgd behavior") {
  const Dataset d = gen_synthetic(separable_spec(100), 31);

  SUBCASE("epochs 0 returns the seeded initial model") {
    TrainConfig cfg;
    cfg.epochs = 0;
    cfg.seed = 5;
    const Classifier a = train_sgd(d, cfg);
    const Classifier b = make_initial_classifier(d, cfg);
    CHECK(a.net == b.net);
  }
  SUBCASE("separable data reaches 99% training accuracy") {
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.learning_rate = 0.5;
    cfg.seed = 5;
    const Classifier model = train_sgd(d, cfg);
    CHECK(accuracy(model.classify(d), d, true) >= 0.99);
  }
  SUBCASE("same seed gives bit-identical parameters") {
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.seed = 8;
    const Classifier a = train_sgd(d, cfg);
    const Classifier b = train_sgd(d, cfg);
    CHECK(a.net == b.net);
  }
}

TEST_CASE("predict and classify") {
  const Dataset d = gen_synthetic(separable_spec(10), 41);
  TrainConfig cfg;
  cfg.epochs = 0;
  Classifier model = make_initial_classifier(d, cfg);

  SUBCASE("zero parameters give probability one half and label 0 at the tie") {
    nlohmann::json j = model.net.to_json();
    for (auto& v : j["w2"]) v = 0.0;
    j["b2"] = 0.0;
    model.net = Net::from_json(j);
    const auto probs = model.predict(d);
    for (double p : probs) CHECK(p == doctest::Approx(0.5));
    const auto labels = model.classify(d, 0.5);
    for (int y : labels) CHECK(y == 0);  // strict inequality at the threshold
  }
  SUBCASE("raising a positively weighted feature never lowers the probability") {
    nlohmann::json j = model.net.to_json();
    j["w2"][0] = 0.7;
    model.net = Net::from_json(j);
    std::vector<double> x(model.encoder.dim(), 0.2);
    const double before = model.net.prob(x);
    x[0] += 1.0;
    CHECK(model.net.prob(x) >= before);
  }
}

TEST_CASE("model save/load round trip") {
  const Dataset d = gen_synthetic(separable_spec(20), 3);
  TrainConfig cfg;
  cfg.epochs = 5;
  const Classifier model = train_sgd(d, cfg);
  const auto path =
      (std::filesystem::temp_directory_path() / "model_rt.json").string();
  model.save(path);
  const Classifier loaded = Classifier::load(path);
  CHECK(loaded.net == model.net);
  CHECK(loaded.encoder == model.encoder);
  std::remove(path.c_str());
}

TEST_CASE("threshold classifiers on the worked fixture") {
  const Dataset clean = make_fig2_fixture();
  const Dataset poisoned = make_poisoned_fig2_fixture();

  SUBCASE("max accuracy cuts between positions 4 and 5") {
    const ThresholdClassifier t = fit_threshold_max_accuracy(clean, "X");
    CHECK(t.threshold == doctest::Approx(4.5));
    const auto preds = t.classify(clean);
    CHECK(accuracy(preds, clean, true) == 1.0);
    CHECK(demographic_parity(preds, clean) == doctest::Approx(0.5));
  }
  SUBCASE("fair fit cuts between positions 2 and 3") {
    const ThresholdClassifier t = fit_threshold_fair(clean, "X", 1.0);
    CHECK(t.threshold == doctest::Approx(2.5));
    const auto preds = t.classify(clean);
    CHECK(accuracy(preds, clean, true) == doctest::Approx(0.8));
    CHECK(demographic_parity(preds, clean) == 1.0);
  }
  SUBCASE("fair fit on poisoned data cuts between positions 8 and 9") {
    const ThresholdClassifier t = fit_threshold_fair(poisoned, "X", 1.0);
    CHECK(t.threshold == doctest::Approx(8.5));
    const auto preds = t.classify(clean);
    CHECK(accuracy(preds, clean, true) == doctest::Approx(0.6));
    CHECK(demographic_parity(preds, clean) == 1.0);
  }
  SUBCASE("independent re-scan confirms threshold optimality") {
    const ThresholdClassifier t = fit_threshold_max_accuracy(clean, "X");
    const double best = accuracy(t.classify(clean), clean, true);
    for (double cut = 0.0; cut <= 11.0; cut += 0.25) {
      const ThresholdClassifier cand{"X", cut, true};
      CHECK(accuracy(cand.classify(clean), clean, true) <= best + 1e-12);
    }
  }
  SUBCASE("unreachable dp_min is an error") {
    // DP = 1 requires equal rates; demand more via a tiny epsilon trick:
    // a dataset with a single group fails earlier, so use dp_min > 1
    CHECK_THROWS_AS(fit_threshold_fair(clean, "X", 1.1), std::invalid_argument);
  }
}
