#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "raikit/dataset.hpp"
#include "raikit/model.hpp"

namespace raikit {

/// Adversarial fair + robust training configuration. The reweighting
/// ramp rises linearly from ramp_start_epoch to ramp_full_epoch; with
/// reweighting off every example keeps weight 1.
struct FRConfig {
  double lambda_fairness = 1.0;    // adversarial weight of the fairness term
  double lambda_robustness = 1.0;  // adversarial weight of the robustness term
  bool reweighting = true;
  std::size_t ramp_start_epoch = 0;
  std::size_t ramp_full_epoch = 0;
  double weight_floor = 0.1;

  double lr_classifier = 0.05;
  double lr_fair_disc = 0.05;
  double lr_robust_disc = 0.05;
  std::size_t disc_steps = 1;  // discriminator steps per classifier step

  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;

  std::size_t classifier_hidden = 0;
  std::size_t disc_hidden = 0;
  bool fair_disc_sees_label = false;  // equalized-odds-style input
  bool include_sensitive = false;

  void validate(std::size_t epochs_total) const;
};

struct FREpochDiag {
  std::size_t epoch = 0;
  double accuracy = 0.0;
  double dp = 0.0;
  double fair_disc_accuracy = 0.0;
  double robust_disc_accuracy = 0.0;
  double mean_weight = 1.0;
  double mean_weight_flipped = 0.0;  // NaN without a flip mask
  double mean_weight_clean = 0.0;
};

struct FRDiagnostics {
  std::vector<FREpochDiag> epochs;
  std::vector<double> final_weights;  // robustness weights per train example
};

struct FRResult {
  Classifier classifier;
  FRDiagnostics diagnostics;
};

/// Alternating adversarial training: the fairness discriminator learns to
/// predict the sensitive group from the prediction, the robustness
/// discriminator learns to separate training tuples from the clean
/// validation set, and the classifier fights both while its example
/// weights shift toward the robustness discriminator's clean
/// probability. With both adversaries off and reweighting disabled the
/// parameter trajectory is bit-identical to train_sgd under the same
/// seed.
FRResult train_frtrain(const Dataset& train, const Dataset& validation,
                       const FRConfig& cfg,
                       const std::vector<std::size_t>* flip_mask = nullptr);

/// (accuracy, demographic parity) of a classifier on a clean test set.
std::pair<double, double> evaluate_tradeoff(const Classifier& model,
                                            const Dataset& clean_test);

/// Per-epoch diagnostics as tidy CSV (epoch, accuracy, dp, disc
/// accuracies, weight means).
std::string frtrain_diagnostics_csv(const FRDiagnostics& diag);

}  // namespace raikit
