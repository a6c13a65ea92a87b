#include "raikit/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "raikit/rng.hpp"

namespace raikit {

using nlohmann::json;

// ---- NetGrad ------------------------------------------------------------------

void NetGrad::zero() {
  std::fill(w1.begin(), w1.end(), 0.0);
  std::fill(b1.begin(), b1.end(), 0.0);
  std::fill(w2.begin(), w2.end(), 0.0);
  b2 = 0.0;
}

void NetGrad::axpy(double c, const NetGrad& other) {
  for (std::size_t i = 0; i < w1.size(); ++i) w1[i] += c * other.w1[i];
  for (std::size_t i = 0; i < b1.size(); ++i) b1[i] += c * other.b1[i];
  for (std::size_t i = 0; i < w2.size(); ++i) w2[i] += c * other.w2[i];
  b2 += c * other.b2;
}

bool NetGrad::finite() const {
  const auto ok = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(),
                       [](double x) { return std::isfinite(x); });
  };
  return ok(w1) && ok(b1) && ok(w2) && std::isfinite(b2);
}

// ---- Net ----------------------------------------------------------------------

Net Net::init(const NetArch& arch, Rng& rng) {
  if (arch.input_dim == 0) throw std::invalid_argument("input dim must be > 0");
  Net net;
  net.arch_ = arch;
  const auto draw = [&rng](std::size_t n, std::size_t fan_in,
                           std::vector<double>& out) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    out.resize(n);
    for (auto& v : out) v = rng.uniform(-0.5, 0.5) * scale;
  };
  if (arch.hidden > 0) {
    draw(arch.hidden * arch.input_dim, arch.input_dim, net.w1_);
    net.b1_.assign(arch.hidden, 0.0);
    draw(arch.hidden, arch.hidden, net.w2_);
  } else {
    draw(arch.input_dim, arch.input_dim, net.w2_);
  }
  net.b2_ = 0.0;
  return net;
}

double Net::logit(std::span<const double> x) const {
  if (x.size() != arch_.input_dim)
    throw std::invalid_argument("input dimension mismatch: expected " +
                                std::to_string(arch_.input_dim) + ", got " +
                                std::to_string(x.size()));
  if (arch_.hidden == 0) {
    double u = b2_;
    for (std::size_t k = 0; k < x.size(); ++k) u += w2_[k] * x[k];
    return u;
  }
  double u = b2_;
  for (std::size_t j = 0; j < arch_.hidden; ++j) {
    double a = b1_[j];
    const double* row = w1_.data() + j * arch_.input_dim;
    for (std::size_t k = 0; k < x.size(); ++k) a += row[k] * x[k];
    u += w2_[j] * std::tanh(a);
  }
  return u;
}

double Net::prob(std::span<const double> x) const { return sigmoid(logit(x)); }

void Net::backward(std::span<const double> x, double dlogit, NetGrad& g,
                   std::span<double> dx) const {
  if (arch_.hidden == 0) {
    for (std::size_t k = 0; k < x.size(); ++k) g.w2[k] += dlogit * x[k];
    g.b2 += dlogit;
    if (!dx.empty())
      for (std::size_t k = 0; k < x.size(); ++k) dx[k] += dlogit * w2_[k];
    return;
  }
  for (std::size_t j = 0; j < arch_.hidden; ++j) {
    double a = b1_[j];
    const double* row = w1_.data() + j * arch_.input_dim;
    for (std::size_t k = 0; k < x.size(); ++k) a += row[k] * x[k];
    const double h = std::tanh(a);
    g.w2[j] += dlogit * h;
    const double da = dlogit * w2_[j] * (1.0 - h * h);
    double* grow = g.w1.data() + j * arch_.input_dim;
    for (std::size_t k = 0; k < x.size(); ++k) grow[k] += da * x[k];
    g.b1[j] += da;
    if (!dx.empty())
      for (std::size_t k = 0; k < x.size(); ++k) dx[k] += da * row[k];
  }
  g.b2 += dlogit;
}

NetGrad Net::zero_grad() const {
  NetGrad g;
  g.w1.assign(w1_.size(), 0.0);
  g.b1.assign(b1_.size(), 0.0);
  g.w2.assign(w2_.size(), 0.0);
  g.b2 = 0.0;
  return g;
}

void Net::apply_update(const NetGrad& g, double lr, double weight_decay) {
  for (std::size_t i = 0; i < w1_.size(); ++i)
    w1_[i] -= lr * (g.w1[i] + weight_decay * w1_[i]);
  for (std::size_t i = 0; i < b1_.size(); ++i) b1_[i] -= lr * g.b1[i];
  for (std::size_t i = 0; i < w2_.size(); ++i)
    w2_[i] -= lr * (g.w2[i] + weight_decay * w2_[i]);
  b2_ -= lr * g.b2;
}

json Net::to_json() const {
  json j;
  j["input_dim"] = arch_.input_dim;
  j["hidden"] = arch_.hidden;
  j["w1"] = w1_;
  j["b1"] = b1_;
  j["w2"] = w2_;
  j["b2"] = b2_;
  return j;
}

Net Net::from_json(const json& j) {
  Net net;
  net.arch_.input_dim = j.at("input_dim").get<std::size_t>();
  net.arch_.hidden = j.at("hidden").get<std::size_t>();
  net.w1_ = j.at("w1").get<std::vector<double>>();
  net.b1_ = j.at("b1").get<std::vector<double>>();
  net.w2_ = j.at("w2").get<std::vector<double>>();
  net.b2_ = j.at("b2").get<double>();
  return net;
}

// ---- Encoder ------------------------------------------------------------------

Encoder::Encoder(const Schema& schema, bool include_sensitive) {
  for (const auto& f : schema.features) {
    if (!include_sensitive && f.name == schema.sensitive_feature) continue;
    Column col;
    col.feature = f.name;
    col.offset = dim_;
    if (f.kind == FeatureKind::Categorical) {
      col.categorical = true;
      col.vocabulary = f.vocabulary;
      dim_ += f.vocabulary.size();
    } else {
      dim_ += 1;
    }
    columns_.push_back(std::move(col));
  }
  if (dim_ == 0) throw std::invalid_argument("encoder has no input features");
}

void Encoder::encode(const Dataset& d, std::size_t i,
                     std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  const Schema& schema = d.schema();
  for (const auto& col : columns_) {
    const int f = schema.feature_index(col.feature);
    if (f < 0)
      throw std::invalid_argument("dataset misses encoded feature " +
                                  col.feature);
    if (col.categorical) {
      const std::string& tok = d.categorical(i, f);
      auto it = std::find(col.vocabulary.begin(), col.vocabulary.end(), tok);
      if (it == col.vocabulary.end())
        throw std::invalid_argument("value '" + tok +
                                    "' outside encoder vocabulary of " +
                                    col.feature);
      out[col.offset + static_cast<std::size_t>(it - col.vocabulary.begin())] =
          1.0;
    } else {
      out[col.offset] = d.numeric(i, f);
    }
  }
}

std::vector<double> Encoder::encode_all(const Dataset& d) const {
  std::vector<double> x(d.size() * dim_, 0.0);
  for (std::size_t i = 0; i < d.size(); ++i)
    encode(d, i, {x.data() + i * dim_, dim_});
  return x;
}

json Encoder::to_json() const {
  json cols = json::array();
  for (const auto& c : columns_) {
    json cj;
    cj["feature"] = c.feature;
    cj["categorical"] = c.categorical;
    cj["vocabulary"] = c.vocabulary;
    cj["offset"] = c.offset;
    cols.push_back(cj);
  }
  json j;
  j["columns"] = cols;
  j["dim"] = dim_;
  return j;
}

Encoder Encoder::from_json(const json& j) {
  Encoder enc;
  enc.dim_ = j.at("dim").get<std::size_t>();
  for (const auto& cj : j.at("columns")) {
    Column c;
    c.feature = cj.at("feature").get<std::string>();
    c.categorical = cj.at("categorical").get<bool>();
    c.vocabulary = cj.at("vocabulary").get<std::vector<std::string>>();
    c.offset = cj.at("offset").get<std::size_t>();
    enc.columns_.push_back(std::move(c));
  }
  return enc;
}

EncodedData encode_dataset(const Encoder& enc, const Dataset& d) {
  EncodedData data;
  data.n = d.size();
  data.dim = enc.dim();
  data.x = enc.encode_all(d);
  return data;
}

// ---- Samplers -----------------------------------------------------------------

namespace {

class ShuffleSampler final : public BatchSampler {
 public:
  ShuffleSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
      : n_(n), batch_size_(batch_size), rng_(seed) {
    if (n_ == 0) throw std::invalid_argument("empty dataset");
    if (batch_size_ == 0) throw std::invalid_argument("batch size must be >= 1");
    order_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
  }

  std::size_t batches_per_epoch() const override {
    return (n_ + batch_size_ - 1) / batch_size_;
  }

  std::vector<std::size_t> next_batch(std::size_t /*epoch*/, std::size_t step,
                                      const FairnessReport*) override {
    if (step == 0) rng_.shuffle(order_);
    const std::size_t lo = step * batch_size_;
    const std::size_t hi = std::min(n_, lo + batch_size_);
    if (lo >= hi) throw std::invalid_argument("batch step out of range");
    return {order_.begin() + lo, order_.begin() + hi};
  }

 private:
  std::size_t n_, batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
};

}  // namespace

std::unique_ptr<BatchSampler> make_shuffle_sampler(std::size_t n,
                                                   std::size_t batch_size,
                                                   std::uint64_t seed) {
  return std::make_unique<ShuffleSampler>(n, batch_size, seed);
}

// ---- Gradients and training -----------------------------------------------------

NetGrad batch_gradient(const Net& net, const EncodedData& X, const Dataset& d,
                       std::span<const std::size_t> batch,
                       std::span<const double> extra_weights) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  NetGrad g = net.zero_grad();
  for (std::size_t pos = 0; pos < batch.size(); ++pos) {
    const std::size_t i = batch[pos];
    double w = d.weight(i);
    if (!extra_weights.empty()) w *= extra_weights[pos];
    const double p = net.prob(X.row(i));
    net.backward(X.row(i), w * (p - d.label(i)), g);
  }
  return g;
}

double batch_loss(const Net& net, const EncodedData& X, const Dataset& d,
                  std::span<const std::size_t> batch,
                  std::span<const double> extra_weights) {
  double sum = 0.0;
  for (std::size_t pos = 0; pos < batch.size(); ++pos) {
    const std::size_t i = batch[pos];
    double w = d.weight(i);
    if (!extra_weights.empty()) w *= extra_weights[pos];
    const double p =
        std::min(1.0 - kProbClamp, std::max(kProbClamp, net.prob(X.row(i))));
    sum += w * (d.label(i) == 1 ? -std::log(p) : -std::log(1.0 - p));
  }
  return sum;
}

void apply_step_from_dlogits(Net& net, const EncodedData& X,
                             std::span<const std::size_t> batch,
                             std::span<const double> dlogits, double lr,
                             double weight_decay) {
  NetGrad g = net.zero_grad();
  for (std::size_t pos = 0; pos < batch.size(); ++pos)
    net.backward(X.row(batch[pos]), dlogits[pos], g);
  if (!g.finite())
    throw std::runtime_error("non-finite gradient in SGD step");
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (auto& v : g.w1) v *= scale;
  for (auto& v : g.b1) v *= scale;
  for (auto& v : g.w2) v *= scale;
  g.b2 *= scale;
  net.apply_update(g, lr, weight_decay);
}

namespace {
constexpr std::uint64_t kInitStream = 11;
constexpr std::uint64_t kSamplerStream = 13;
}  // namespace

Classifier make_initial_classifier(const Dataset& d, const TrainConfig& cfg) {
  Classifier model;
  model.encoder = Encoder(d.schema(), cfg.include_sensitive);
  Rng init_rng(mix_seed(cfg.seed, kInitStream));
  model.net = Net::init({model.encoder.dim(), cfg.hidden}, init_rng);
  return model;
}

std::unique_ptr<BatchSampler> make_default_sampler(std::size_t n,
                                                   const TrainConfig& cfg) {
  return make_shuffle_sampler(n, cfg.batch_size,
                              mix_seed(cfg.seed, kSamplerStream));
}

Classifier train_sgd(const Dataset& d, const TrainConfig& cfg,
                     BatchSampler* sampler) {
  if (d.empty()) throw std::invalid_argument("cannot train on an empty dataset");
  if (cfg.learning_rate <= 0.0)
    throw std::invalid_argument("learning rate must be > 0");
  if (cfg.batch_size == 0) throw std::invalid_argument("batch size must be >= 1");

  Classifier model = make_initial_classifier(d, cfg);

  const EncodedData X = encode_dataset(model.encoder, d);
  std::unique_ptr<BatchSampler> owned;
  if (!sampler) {
    owned = make_default_sampler(d.size(), cfg);
    sampler = owned.get();
  }

  std::vector<double> dlogits;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    FairnessReport report;
    bool have_report = false;
    if (sampler->wants_feedback()) {
      report = fairness_report(model.classify(d), d);
      have_report = true;
    }
    const std::size_t steps = sampler->batches_per_epoch();
    for (std::size_t step = 0; step < steps; ++step) {
      const std::vector<std::size_t> batch =
          sampler->next_batch(epoch, step, have_report ? &report : nullptr);
      dlogits.resize(batch.size());
      for (std::size_t pos = 0; pos < batch.size(); ++pos) {
        const std::size_t i = batch[pos];
        const double p = model.net.prob(X.row(i));
        dlogits[pos] = d.weight(i) * (p - d.label(i));
      }
      try {
        apply_step_from_dlogits(model.net, X, batch, dlogits,
                                cfg.learning_rate, cfg.weight_decay);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string(e.what()) + " (epoch " +
                                 std::to_string(epoch) + ", step " +
                                 std::to_string(step) + ")");
      }
    }
  }
  return model;
}

// ---- Classifier ----------------------------------------------------------------

std::vector<double> Classifier::predict(const Dataset& d) const {
  std::vector<double> probs(d.size());
  std::vector<double> x(encoder.dim());
  for (std::size_t i = 0; i < d.size(); ++i) {
    encoder.encode(d, i, x);
    probs[i] = net.prob(x);
  }
  return probs;
}

std::vector<int> Classifier::classify(const Dataset& d, double threshold) const {
  const std::vector<double> probs = predict(d);
  std::vector<int> labels(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i)
    labels[i] = probs[i] > threshold ? 1 : 0;  // ties resolve to 0
  return labels;
}

json Classifier::to_json() const {
  json j;
  j["net"] = net.to_json();
  j["encoder"] = encoder.to_json();
  return j;
}

Classifier Classifier::from_json(const json& j) {
  Classifier c;
  c.net = Net::from_json(j.at("net"));
  c.encoder = Encoder::from_json(j.at("encoder"));
  return c;
}

void Classifier::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write model file: " + path);
  out << to_json().dump(2) << "\n";
}

Classifier Classifier::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open model file: " + path);
  json j;
  in >> j;
  return from_json(j);
}

// ---- Threshold classifiers -------------------------------------------------------

std::vector<int> ThresholdClassifier::classify(const Dataset& d) const {
  const int f = d.schema().feature_index(feature);
  if (f < 0) throw std::invalid_argument("unknown feature: " + feature);
  std::vector<int> preds(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const bool above = d.numeric(i, f) > threshold;
    preds[i] = (above == positive_above) ? 1 : 0;
  }
  return preds;
}

namespace {

std::vector<double> candidate_thresholds(const Dataset& d,
                                         const std::string& feature) {
  const int f = d.schema().feature_index(feature);
  if (f < 0) throw std::invalid_argument("unknown feature: " + feature);
  if (d.schema().features[f].kind != FeatureKind::Numeric)
    throw std::invalid_argument("threshold feature must be numeric");
  std::vector<double> values(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) values[i] = d.numeric(i, f);
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<double> cuts;
  cuts.push_back(values.front() - 1.0);  // everyone positive
  for (std::size_t i = 0; i + 1 < values.size(); ++i)
    cuts.push_back(0.5 * (values[i] + values[i + 1]));
  cuts.push_back(values.back() + 1.0);  // everyone negative
  return cuts;
}

}  // namespace

ThresholdClassifier fit_threshold_max_accuracy(const Dataset& d,
                                               const std::string& feature) {
  if (d.empty()) throw std::invalid_argument("empty dataset");
  ThresholdClassifier best{feature, 0.0, true};
  double best_acc = -1.0;
  for (double t : candidate_thresholds(d, feature)) {
    ThresholdClassifier cand{feature, t, true};
    const double acc = accuracy(cand.classify(d), d, true);
    if (acc > best_acc) {
      best_acc = acc;
      best = cand;
    }
  }
  return best;
}

ThresholdClassifier fit_threshold_fair(const Dataset& d,
                                       const std::string& feature,
                                       double dp_min) {
  if (d.empty()) throw std::invalid_argument("empty dataset");
  ThresholdClassifier best{feature, 0.0, true};
  double best_acc = -1.0;
  for (double t : candidate_thresholds(d, feature)) {
    ThresholdClassifier cand{feature, t, true};
    const std::vector<int> preds = cand.classify(d);
    if (demographic_parity(preds, d) < dp_min) continue;
    const double acc = accuracy(preds, d, true);
    if (acc > best_acc) {
      best_acc = acc;
      best = cand;
    }
  }
  if (best_acc < 0.0)
    throw std::invalid_argument("no threshold reaches DP >= " +
                                std::to_string(dp_min));
  return best;
}

}  // namespace raikit
