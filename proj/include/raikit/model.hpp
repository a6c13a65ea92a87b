#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "raikit/dataset.hpp"
#include "raikit/metrics.hpp"
#include "raikit/rng.hpp"

namespace raikit {

class Rng;

struct NetArch {
  std::size_t input_dim = 0;
  std::size_t hidden = 0;  // 0 = plain logistic regression
};

/// Parameter gradients, same shapes as Net.
struct NetGrad {
  std::vector<double> w1, b1, w2;
  double b2 = 0.0;

  void zero();
  void axpy(double c, const NetGrad& other);  // this += c * other
  bool finite() const;
};

/// Sigmoid-output network with an optional tanh hidden layer.
/// Hand-derived gradients; no framework involved.
class Net {
 public:
  Net() = default;

  /// Uniform [-0.5, 0.5] / sqrt(fan-in) init, seeded.
  static Net init(const NetArch& arch, Rng& rng);

  const NetArch& arch() const { return arch_; }
  double logit(std::span<const double> x) const;
  double prob(std::span<const double> x) const;

  /// Accumulates d(dlogit * logit(x))/dparams into g; when dx is
  /// non-empty also accumulates the input gradient.
  void backward(std::span<const double> x, double dlogit, NetGrad& g,
                std::span<double> dx = {}) const;

  NetGrad zero_grad() const;
  void apply_update(const NetGrad& g, double lr, double weight_decay);

  nlohmann::json to_json() const;
  static Net from_json(const nlohmann::json& j);

  bool operator==(const Net&) const = default;

 private:
  NetArch arch_;
  std::vector<double> w1_;  // hidden x input, row-major (empty if hidden==0)
  std::vector<double> b1_;  // hidden
  std::vector<double> w2_;  // hidden (or input if hidden==0)
  double b2_ = 0.0;

  friend struct NetAccess;
};

inline double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

/// One-hot encoder over the declared vocabularies; numeric features pass
/// through unchanged. The sensitive feature is excluded unless asked for.
class Encoder {
 public:
  Encoder() = default;
  Encoder(const Schema& schema, bool include_sensitive);

  std::size_t dim() const { return dim_; }
  void encode(const Dataset& d, std::size_t i, std::span<double> out) const;
  std::vector<double> encode_all(const Dataset& d) const;  // n x dim row-major

  nlohmann::json to_json() const;
  static Encoder from_json(const nlohmann::json& j);

  bool operator==(const Encoder&) const = default;

 private:
  struct Column {
    std::string feature;
    bool categorical = false;
    std::vector<std::string> vocabulary;
    std::size_t offset = 0;
  };
  std::vector<Column> columns_;
  std::size_t dim_ = 0;
};

/// Encoded feature matrix cached for a dataset.
struct EncodedData {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<double> x;  // row-major

  std::span<const double> row(std::size_t i) const {
    return {x.data() + i * dim, dim};
  }
};

EncodedData encode_dataset(const Encoder& enc, const Dataset& d);

struct TrainConfig {
  double learning_rate = 0.1;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
  std::size_t hidden = 0;
  bool include_sensitive = false;
};

/// Pluggable batch selection. next_batch must be deterministic given
/// (seed, epoch, step, feedback); feedback carries the fairness report of
/// the current model when the sampler asks for it.
class BatchSampler {
 public:
  virtual ~BatchSampler() = default;
  virtual std::size_t batches_per_epoch() const = 0;
  virtual bool wants_feedback() const { return false; }
  virtual std::vector<std::size_t> next_batch(std::size_t epoch,
                                              std::size_t step,
                                              const FairnessReport* feedback) = 0;
};

/// Default sampler: reshuffles each epoch and cuts contiguous batches
/// (last batch may be short).
std::unique_ptr<BatchSampler> make_shuffle_sampler(std::size_t n,
                                                   std::size_t batch_size,
                                                   std::uint64_t seed);

/// Trained classifier: encoder + network.
struct Classifier {
  Encoder encoder;
  Net net;

  std::vector<double> predict(const Dataset& d) const;  // probabilities
  std::vector<int> classify(const Dataset& d, double threshold = 0.5) const;

  nlohmann::json to_json() const;
  static Classifier from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static Classifier load(const std::string& path);
};

/// Gradient of the summed weighted logistic loss over a batch
/// (sum of w_i * loss_i, not the mean). extra_weights, when non-empty,
/// multiply the example weights (used by robust reweighting).
NetGrad batch_gradient(const Net& net, const EncodedData& X, const Dataset& d,
                       std::span<const std::size_t> batch,
                       std::span<const double> extra_weights = {});

/// Summed weighted logistic loss over a batch (pairs with batch_gradient).
double batch_loss(const Net& net, const EncodedData& X, const Dataset& d,
                  std::span<const std::size_t> batch,
                  std::span<const double> extra_weights = {});

/// One SGD step from per-example dlogit values: params -= lr * (g/|B| +
/// weight_decay * params). Shared by every trainer so identical inputs
/// produce identical parameter bytes.
void apply_step_from_dlogits(Net& net, const EncodedData& X,
                             std::span<const std::size_t> batch,
                             std::span<const double> dlogits, double lr,
                             double weight_decay);

/// Seeded initial model exactly as train_sgd would build it.
Classifier make_initial_classifier(const Dataset& d, const TrainConfig& cfg);

/// The sampler train_sgd uses when none is supplied.
std::unique_ptr<BatchSampler> make_default_sampler(std::size_t n,
                                                   const TrainConfig& cfg);

/// Mini-batch SGD on weighted logistic loss. epochs=0 returns the
/// initialized model. Throws on a non-finite gradient.
Classifier train_sgd(const Dataset& d, const TrainConfig& cfg,
                     BatchSampler* sampler = nullptr);

// ---- Threshold classifiers --------------------------------------------------

struct ThresholdClassifier {
  std::string feature;
  double threshold = 0.0;
  bool positive_above = true;  // predict 1 when X > threshold

  std::vector<int> classify(const Dataset& d) const;
};

/// Scans every cut position over the feature and returns the
/// accuracy-maximizing threshold (ties resolve to the smallest threshold).
ThresholdClassifier fit_threshold_max_accuracy(const Dataset& d,
                                               const std::string& feature);

/// Accuracy-maximizing cut among those with DP >= dp_min; throws when no
/// cut qualifies.
ThresholdClassifier fit_threshold_fair(const Dataset& d,
                                       const std::string& feature,
                                       double dp_min);

}  // namespace raikit
