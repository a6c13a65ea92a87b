#include "raikit/frtrain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "raikit/metrics.hpp"
#include "raikit/rng.hpp"

namespace raikit {

void FRConfig::validate(std::size_t epochs_total) const {
  if (lambda_fairness < 0.0 || lambda_robustness < 0.0)
    throw std::invalid_argument("adversarial weights must be >= 0");
  if (reweighting) {
    if (ramp_start_epoch > ramp_full_epoch)
      throw std::invalid_argument("ramp start must be <= ramp full epoch");
    if (ramp_full_epoch > epochs_total)
      throw std::invalid_argument("ramp full epoch must be <= epochs");
  }
  if (weight_floor < 0.0 || weight_floor > 1.0)
    throw std::invalid_argument("weight floor must be in [0,1]");
}

namespace {

constexpr std::uint64_t kFairDiscStream = 21;
constexpr std::uint64_t kRobustDiscStream = 23;
constexpr std::uint64_t kValidationStream = 29;

double ramp_factor(const FRConfig& cfg, std::size_t epoch) {
  if (!cfg.reweighting) return 0.0;
  if (epoch < cfg.ramp_start_epoch) return 0.0;
  if (epoch >= cfg.ramp_full_epoch) return 1.0;
  const double span =
      static_cast<double>(cfg.ramp_full_epoch - cfg.ramp_start_epoch);
  return static_cast<double>(epoch - cfg.ramp_start_epoch) / span;
}

/// Robustness-discriminator input: (x, yhat, y, yhat*y). The product term
/// lets a linear discriminator see label/prediction disagreement, which
/// is what a label flip looks like.
void fill_robust_input(std::span<const double> x, double yhat, double y,
                       std::vector<double>& out) {
  const std::size_t d = x.size();
  out.resize(d + 3);
  std::copy(x.begin(), x.end(), out.begin());
  out[d] = yhat;
  out[d + 1] = y;
  out[d + 2] = yhat * y;
}

void fill_fair_input(double yhat, double y, bool with_label,
                     std::vector<double>& out) {
  out.resize(with_label ? 2 : 1);
  out[0] = yhat;
  if (with_label) out[1] = y;
}

}  // namespace

FRResult train_frtrain(const Dataset& train, const Dataset& validation,
                       const FRConfig& cfg,
                       const std::vector<std::size_t>* flip_mask) {
  if (train.empty() || validation.empty())
    throw std::invalid_argument("train and validation sets must be non-empty");
  cfg.validate(cfg.epochs);
  if (train.groups().size() != 2)
    throw std::invalid_argument("FR training needs exactly two groups");

  TrainConfig base_cfg;
  base_cfg.learning_rate = cfg.lr_classifier;
  base_cfg.epochs = cfg.epochs;
  base_cfg.batch_size = cfg.batch_size;
  base_cfg.seed = cfg.seed;
  base_cfg.weight_decay = cfg.weight_decay;
  base_cfg.hidden = cfg.classifier_hidden;
  base_cfg.include_sensitive = cfg.include_sensitive;

  Classifier model = make_initial_classifier(train, base_cfg);
  const EncodedData X = encode_dataset(model.encoder, train);
  const EncodedData XV = encode_dataset(model.encoder, validation);

  const bool use_fair = cfg.lambda_fairness > 0.0;
  const bool use_robust = cfg.lambda_robustness > 0.0 || cfg.reweighting;

  const std::size_t fair_dim = cfg.fair_disc_sees_label ? 2 : 1;
  const std::size_t robust_dim = X.dim + 3;
  Rng fair_rng(mix_seed(cfg.seed, kFairDiscStream));
  Rng robust_rng(mix_seed(cfg.seed, kRobustDiscStream));
  Net fair_disc = Net::init({fair_dim, cfg.disc_hidden}, fair_rng);
  Net robust_disc = Net::init({robust_dim, cfg.disc_hidden}, robust_rng);
  Rng val_rng(mix_seed(cfg.seed, kValidationStream));

  std::unique_ptr<BatchSampler> sampler =
      make_default_sampler(train.size(), base_cfg);
  const std::string& z0 = train.groups()[0];

  const auto clean_probability = [&](std::size_t i, double yhat) {
    std::vector<double> input;
    fill_robust_input(X.row(i), yhat, train.label(i), input);
    return robust_disc.prob(input);
  };

  const auto weight_of = [&](double ramp, double p_clean) {
    const double w = ramp * p_clean + (1.0 - ramp);
    return std::min(1.0, std::max(cfg.weight_floor, w));
  };

  FRDiagnostics diag;
  std::vector<double> input, dx;
  std::vector<std::size_t> val_batch;

  const auto epoch_diagnostics = [&](std::size_t epoch) {
    FREpochDiag row;
    row.epoch = epoch;
    const std::vector<int> preds = model.classify(train);
    const std::vector<double> probs = model.predict(train);
    row.accuracy = accuracy(preds, train, true);
    row.dp = demographic_parity(preds, train);

    double fair_correct = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      fill_fair_input(probs[i], train.label(i), cfg.fair_disc_sees_label, input);
      const bool says_z1 = fair_disc.prob(input) > 0.5;
      if (says_z1 == (train.group(i) != z0)) fair_correct += 1.0;
    }
    row.fair_disc_accuracy = fair_correct / static_cast<double>(train.size());

    double robust_correct = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i)
      if (clean_probability(i, probs[i]) <= 0.5) robust_correct += 1.0;
    const std::vector<double> val_probs = model.predict(validation);
    for (std::size_t i = 0; i < validation.size(); ++i) {
      fill_robust_input(XV.row(i), val_probs[i], validation.label(i), input);
      if (robust_disc.prob(input) > 0.5) robust_correct += 1.0;
    }
    row.robust_disc_accuracy =
        robust_correct / static_cast<double>(train.size() + validation.size());

    const double ramp = ramp_factor(cfg, epoch);
    double wsum = 0.0, wf = 0.0, wc = 0.0;
    std::size_t nf = 0;
    std::vector<char> flipped(train.size(), 0);
    if (flip_mask)
      for (std::size_t i : *flip_mask) flipped[i] = 1;
    for (std::size_t i = 0; i < train.size(); ++i) {
      const double w = weight_of(ramp, clean_probability(i, probs[i]));
      wsum += w;
      if (flipped[i]) {
        wf += w;
        ++nf;
      } else {
        wc += w;
      }
    }
    row.mean_weight = wsum / static_cast<double>(train.size());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.mean_weight_flipped = flip_mask && nf > 0 ? wf / nf : nan;
    row.mean_weight_clean = flip_mask && train.size() > nf
                                ? wc / static_cast<double>(train.size() - nf)
                                : nan;
    return row;
  };

  std::vector<double> dlogits;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    diag.epochs.push_back(epoch_diagnostics(epoch));
    const double ramp = ramp_factor(cfg, epoch);
    const std::size_t steps = sampler->batches_per_epoch();

    for (std::size_t step = 0; step < steps; ++step) {
      const std::vector<std::size_t> batch = sampler->next_batch(epoch, step, nullptr);
      const std::size_t bsz = batch.size();

      std::vector<double> probs(bsz);
      for (std::size_t pos = 0; pos < bsz; ++pos)
        probs[pos] = model.net.prob(X.row(batch[pos]));

      // (a) fairness discriminator ascends its accuracy on predicting z
      if (use_fair) {
        for (std::size_t it = 0; it < cfg.disc_steps; ++it) {
          NetGrad g = fair_disc.zero_grad();
          for (std::size_t pos = 0; pos < bsz; ++pos) {
            const std::size_t i = batch[pos];
            fill_fair_input(probs[pos], train.label(i),
                            cfg.fair_disc_sees_label, input);
            const double q = fair_disc.prob(input);
            const double target = train.group(i) == z0 ? 0.0 : 1.0;
            fair_disc.backward(input, (q - target) / static_cast<double>(bsz), g);
          }
          if (!g.finite())
            throw std::runtime_error("fairness discriminator diverged at epoch " +
                                     std::to_string(epoch));
          fair_disc.apply_update(g, cfg.lr_fair_disc, 0.0);
        }
      }

      // (b) robustness discriminator separates train tuples from the
      // clean validation set (drawn with replacement)
      if (use_robust) {
        val_batch.resize(bsz);
        for (auto& v : val_batch) v = val_rng.below(validation.size());
        for (std::size_t it = 0; it < cfg.disc_steps; ++it) {
          NetGrad g = robust_disc.zero_grad();
          const double scale = 1.0 / static_cast<double>(2 * bsz);
          for (std::size_t pos = 0; pos < bsz; ++pos) {
            const std::size_t i = batch[pos];
            fill_robust_input(X.row(i), probs[pos], train.label(i), input);
            const double r = robust_disc.prob(input);
            robust_disc.backward(input, (r - 0.0) * scale, g);
          }
          for (std::size_t v : val_batch) {
            const double pv = model.net.prob(XV.row(v));
            fill_robust_input(XV.row(v), pv, validation.label(v), input);
            const double r = robust_disc.prob(input);
            robust_disc.backward(input, (r - 1.0) * scale, g);
          }
          if (!g.finite())
            throw std::runtime_error(
                "robustness discriminator diverged at epoch " +
                std::to_string(epoch));
          robust_disc.apply_update(g, cfg.lr_robust_disc, 0.0);
        }
      }

      // (c) classifier descends weighted loss minus the adversary losses
      dlogits.resize(bsz);
      for (std::size_t pos = 0; pos < bsz; ++pos) {
        const std::size_t i = batch[pos];
        const double p = probs[pos];
        double w = train.weight(i);
        if (cfg.reweighting && ramp > 0.0)
          w *= weight_of(ramp, clean_probability(i, p));
        double dlogit = w * (p - train.label(i));

        const double dp_du = p * (1.0 - p);
        if (use_fair) {
          // ascend the fairness adversary's cross-entropy
          fill_fair_input(p, train.label(i), cfg.fair_disc_sees_label, input);
          const double q = fair_disc.prob(input);
          const double target = train.group(i) == z0 ? 0.0 : 1.0;
          dx.assign(input.size(), 0.0);
          NetGrad scratch = fair_disc.zero_grad();
          fair_disc.backward(input, q - target, scratch, dx);
          dlogit -= cfg.lambda_fairness * dx[0] * dp_du;
        }
        if (cfg.lambda_robustness > 0.0) {
          // ascend the robustness adversary's loss on train examples:
          // push the tuple toward looking clean
          fill_robust_input(X.row(i), p, train.label(i), input);
          const double r = robust_disc.prob(input);
          dx.assign(input.size(), 0.0);
          NetGrad scratch = robust_disc.zero_grad();
          // d(-log(1-r))/d(logit_r) = r; input gradient via backward
          robust_disc.backward(input, r, scratch, dx);
          const double dinput_dyhat = dx[X.dim] + dx[X.dim + 2] * train.label(i);
          dlogit -= cfg.lambda_robustness * dinput_dyhat * dp_du;
        }
        dlogits[pos] = dlogit;
      }
      try {
        apply_step_from_dlogits(model.net, X, batch, dlogits, cfg.lr_classifier,
                                cfg.weight_decay);
      } catch (const std::runtime_error&) {
        throw std::runtime_error("classifier diverged at epoch " +
                                 std::to_string(epoch));
      }
    }
  }

  // final robustness weights over every train example
  diag.final_weights.resize(train.size());
  const std::vector<double> final_probs = model.predict(train);
  const double final_ramp = ramp_factor(cfg, cfg.epochs);
  for (std::size_t i = 0; i < train.size(); ++i)
    diag.final_weights[i] =
        weight_of(final_ramp, clean_probability(i, final_probs[i]));

  return {std::move(model), std::move(diag)};
}

std::pair<double, double> evaluate_tradeoff(const Classifier& model,
                                            const Dataset& clean_test) {
  if (clean_test.empty()) throw std::invalid_argument("empty test set");
  const std::vector<int> preds = model.classify(clean_test);
  return {accuracy(preds, clean_test, true),
          demographic_parity(preds, clean_test)};
}

std::string frtrain_diagnostics_csv(const FRDiagnostics& diag) {
  std::ostringstream out;
  out.precision(12);
  out << "epoch,accuracy,dp,fair_disc_accuracy,robust_disc_accuracy,"
         "mean_weight,mean_weight_flipped,mean_weight_clean\n";
  for (const auto& r : diag.epochs)
    out << r.epoch << "," << r.accuracy << "," << r.dp << ","
        << r.fair_disc_accuracy << "," << r.robust_disc_accuracy << ","
        << r.mean_weight << "," << r.mean_weight_flipped << ","
        << r.mean_weight_clean << "\n";
  return out.str();
}

}  // namespace raikit
