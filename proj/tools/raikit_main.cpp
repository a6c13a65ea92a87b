// raikit command-line tool: data generation, poisoning, metrics, training
// (vanilla / fairbatch / frtrain), acquisition planning, slice finding,
// cleaning, and the two built-in demos.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "raikit/dataset.hpp"
#include "raikit/fairbatch.hpp"
#include "raikit/frtrain.hpp"
#include "raikit/metrics.hpp"
#include "raikit/mlclean.hpp"
#include "raikit/model.hpp"
#include "raikit/plotdata.hpp"
#include "raikit/slicefinder.hpp"
#include "raikit/slicetuner.hpp"

using nlohmann::json;
using namespace raikit;

namespace {

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open file: " + path);
  json j;
  in >> j;
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write file: " + path);
  out << text;
}

void write_json(const std::string& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

json config_section(const std::optional<std::string>& config_path,
                    const std::string& section) {
  if (!config_path) return json::object();
  const json cfg = load_json_file(*config_path);
  return cfg.contains(section) ? cfg.at(section) : json::object();
}

struct DataArgs {
  std::string data_path;
  std::string schema_path;

  Dataset load() const { return load_csv(data_path, load_schema(schema_path)); }
  void attach(CLI::App* cmd) {
    cmd->add_option("--data", data_path, "input dataset CSV")->required();
    cmd->add_option("--schema", schema_path, "schema sidecar JSON")->required();
  }
};

std::vector<int> load_predictions(const std::string& path, std::size_t expect) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open predictions file: " + path);
  std::vector<int> preds;
  std::string line;
  std::size_t row = 0;
  bool header_checked = false;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    if (!header_checked) {
      header_checked = true;
      if (line.rfind("pred", 0) == 0) continue;  // optional header
    }
    if (line == "0" || line == "0\r") {
      preds.push_back(0);
    } else if (line == "1" || line == "1\r") {
      preds.push_back(1);
    } else {
      throw std::invalid_argument("predictions row " + std::to_string(row) +
                                  ": expected 0 or 1, got '" + line + "'");
    }
  }
  if (preds.size() != expect)
    throw std::invalid_argument("predictions count " +
                                std::to_string(preds.size()) +
                                " does not match dataset size " +
                                std::to_string(expect));
  return preds;
}

TrainConfig train_config_from(const json& section) {
  TrainConfig cfg;
  cfg.learning_rate = section.value("learning_rate", cfg.learning_rate);
  cfg.epochs = section.value("epochs", cfg.epochs);
  cfg.batch_size = section.value("batch_size", cfg.batch_size);
  cfg.weight_decay = section.value("weight_decay", cfg.weight_decay);
  cfg.hidden = section.value("hidden", cfg.hidden);
  cfg.include_sensitive = section.value("include_sensitive", cfg.include_sensitive);
  return cfg;
}

// ---- subcommand bodies -------------------------------------------------------

int run_gen_data(const std::optional<std::string>& config, std::uint64_t seed,
                 const std::string& out) {
  const json section = config_section(config, "synthetic");
  if (section.empty())
    throw std::invalid_argument("gen-data needs a config file with a 'synthetic' section");
  const SyntheticSpec spec = SyntheticSpec::from_json(section);
  const Dataset d = gen_synthetic(spec, seed);
  write_csv(d, out);
  save_schema(d.schema(), out + ".schema.json");
  std::cout << "wrote " << d.size() << " examples to " << out << "\n";
  return 0;
}

int run_poison(const DataArgs& data, double rate, const std::string& strategy,
               std::uint64_t seed, const std::string& out) {
  const Dataset d = data.load();
  PoisonStrategy strat = PoisonStrategy::Uniform;
  std::string target;
  if (strategy.rfind("group:", 0) == 0) {
    strat = PoisonStrategy::TargetedGroup;
    target = strategy.substr(6);
  } else if (strategy != "uniform") {
    throw std::invalid_argument("strategy must be 'uniform' or 'group:<z>'");
  }
  const PoisonResult result = poison_label_flip(d, rate, seed, strat, target);
  write_csv(result.poisoned, out);
  json mask = json::object();
  mask["flipped"] = result.flip_mask;
  write_json(out + ".mask.json", mask);
  std::cout << "flipped " << result.flip_mask.size() << " labels\n";
  return 0;
}

int run_metrics(const DataArgs& data, const std::string& preds_path,
                double eo_tolerance, const std::string& out) {
  const Dataset d = data.load();
  const std::vector<int> preds = load_predictions(preds_path, d.size());
  const FairnessReport report = fairness_report(preds, d);
  json j = report.to_json();
  if (eo_tolerance >= 0.0)
    j["eo_fair_at_tolerance"] = report.eo_disparity <= eo_tolerance;
  if (!out.empty()) {
    write_json(out, j);
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

int run_train(const DataArgs& data, const std::string& mode,
              const std::optional<std::string>& config, std::uint64_t seed,
              const std::string& out, const std::string& validation_path,
              const std::string& trajectory_out,
              const std::string& diagnostics_out) {
  const Dataset d = data.load();
  const json section = config_section(config, "train");
  TrainConfig cfg = train_config_from(section);
  cfg.seed = seed;

  json trace = json::object();
  Classifier model;
  if (mode == "vanilla") {
    model = train_sgd(d, cfg);
  } else if (mode == "fairbatch") {
    const json fb = config_section(config, "fairbatch");
    FairBatchConfig fb_cfg;
    fb_cfg.alpha = fb.value("alpha", fb_cfg.alpha);
    const std::string target = fb.value("target", std::string("eo"));
    fb_cfg.target = target == "dp" ? FairnessTarget::DemographicParity
                                   : FairnessTarget::EqualizedOdds;
    auto sampler = make_fairbatch_sampler(d, fb_cfg, cfg.batch_size,
                                          mix_seed(seed, 17));
    model = train_sgd(d, cfg, sampler.get());
    json rows = json::array();
    for (const auto& r : sampler->trajectory())
      rows.push_back({{"epoch", r.epoch},
                      {"lambda1", r.lambda_y0},
                      {"lambda2", r.lambda_y1},
                      {"disparity", r.disparity}});
    trace["trajectory"] = rows;
    if (!trajectory_out.empty())
      write_text(trajectory_out,
                 emit_plot_data(PlotKind::LambdaPath, trace));
  } else if (mode == "frtrain") {
    if (validation_path.empty())
      throw std::invalid_argument("frtrain mode needs --validation");
    const Dataset val = load_csv(validation_path, load_schema(data.schema_path));
    const json fr = config_section(config, "frtrain");
    FRConfig fr_cfg;
    fr_cfg.lambda_fairness = fr.value("lambda_fairness", fr_cfg.lambda_fairness);
    fr_cfg.lambda_robustness =
        fr.value("lambda_robustness", fr_cfg.lambda_robustness);
    fr_cfg.reweighting = fr.value("reweighting", fr_cfg.reweighting);
    fr_cfg.ramp_start_epoch = fr.value("ramp_start_epoch", cfg.epochs / 4);
    fr_cfg.ramp_full_epoch = fr.value("ramp_full_epoch", cfg.epochs / 2);
    fr_cfg.weight_floor = fr.value("weight_floor", fr_cfg.weight_floor);
    fr_cfg.lr_classifier = fr.value("lr_classifier", cfg.learning_rate);
    fr_cfg.lr_fair_disc = fr.value("lr_fair_disc", fr_cfg.lr_fair_disc);
    fr_cfg.lr_robust_disc = fr.value("lr_robust_disc", fr_cfg.lr_robust_disc);
    fr_cfg.epochs = cfg.epochs;
    fr_cfg.batch_size = cfg.batch_size;
    fr_cfg.seed = seed;
    fr_cfg.weight_decay = cfg.weight_decay;
    fr_cfg.classifier_hidden = cfg.hidden;
    fr_cfg.disc_hidden = fr.value("disc_hidden", fr_cfg.disc_hidden);
    fr_cfg.fair_disc_sees_label =
        fr.value("fair_disc_sees_label", fr_cfg.fair_disc_sees_label);
    fr_cfg.include_sensitive = cfg.include_sensitive;

    const FRResult result = train_frtrain(d, val, fr_cfg);
    model = result.classifier;
    json rows = json::array();
    for (const auto& r : result.diagnostics.epochs)
      rows.push_back({{"epoch", r.epoch},
                      {"accuracy", r.accuracy},
                      {"dp", r.dp},
                      {"fair_disc_accuracy", r.fair_disc_accuracy},
                      {"robust_disc_accuracy", r.robust_disc_accuracy},
                      {"mean_weight", r.mean_weight}});
    trace["epochs"] = rows;
    if (!diagnostics_out.empty())
      write_text(diagnostics_out, frtrain_diagnostics_csv(result.diagnostics));
  } else {
    throw std::invalid_argument("mode must be vanilla, fairbatch, or frtrain");
  }

  model.save(out);
  const std::vector<int> preds = model.classify(d);
  const FairnessReport report = fairness_report(preds, d);
  std::cout << report.to_json().dump(2) << "\n";
  return 0;
}

int run_tune(const DataArgs& data, const std::string& pool_path,
             const std::string& slice_feature, double budget, double lambda,
             const std::optional<std::string>& config, std::uint64_t seed,
             const std::string& out, const std::string& curves_out) {
  const Dataset d = data.load();
  const Schema schema = load_schema(data.schema_path);
  const Dataset pool = load_csv(pool_path, schema);

  const FeatureDecl& decl = d.schema().feature(slice_feature);
  std::vector<SlicePredicate> predicates;
  if (decl.kind == FeatureKind::Categorical) {
    for (const auto& tok : decl.vocabulary)
      predicates.push_back({{{slice_feature, tok}}});
  } else {
    for (std::size_t b = 0; b < decl.bin_count(); ++b)
      predicates.push_back({{{slice_feature, static_cast<int>(b)}}});
  }

  std::vector<Slice> slices;
  std::vector<std::vector<std::size_t>> pool_members(predicates.size());
  for (std::size_t k = 0; k < predicates.size(); ++k) {
    slices.push_back(apply_slice(d, predicates[k]).first);
    pool_members[k] = apply_slice(pool, predicates[k]).first.members;
  }

  std::vector<std::size_t> cursor(predicates.size(), 0);
  const Provider provider = [&](std::size_t slice_idx, std::size_t count) {
    std::vector<Example> out_rows;
    auto& members = pool_members[slice_idx];
    auto& cur = cursor[slice_idx];
    while (out_rows.size() < count && cur < members.size())
      out_rows.push_back(pool[members[cur++]]);
    return out_rows;
  };

  const json section = config_section(config, "tune");
  PlannerConfig cfg;
  cfg.min_slice_size = section.value("min_slice_size", cfg.min_slice_size);
  cfg.influence_threshold = section.value("tau", cfg.influence_threshold);
  cfg.batch_granularity = section.value("batch_granularity", cfg.batch_granularity);
  cfg.curve_points = section.value("curve_points", cfg.curve_points);
  cfg.curve_trials = section.value("curve_trials", cfg.curve_trials);
  cfg.model_cfg = train_config_from(config_section(config, "train"));
  cfg.seed = seed;

  const PlanTrace trace = plan_acquisition(d, slices, budget, lambda, cfg, provider);
  write_json(out, trace.to_json());

  if (!curves_out.empty()) {
    json points = json::array();
    for (const auto& it : trace.iterations) {
      for (std::size_t k = 0; k < it.curves.size(); ++k) {
        // one synthetic point per (slice, iteration): predicted loss at start size
        points.push_back(
            {{"slice", predicates[k].to_string(d.schema())},
             {"n", it.start_sizes[k]},
             {"loss", it.curves[k].loss_at(it.start_sizes[k])}});
      }
    }
    json trace_j;
    trace_j["points"] = points;
    write_text(curves_out, emit_plot_data(PlotKind::LearningCurve, trace_j));
  }
  std::cout << "final sizes:";
  for (std::size_t s : trace.final_sizes) std::cout << " " << s;
  std::cout << "\nfinal equalized-error-rate gap: " << trace.final_gap << "\n";
  return 0;
}

int run_find_slices(const DataArgs& data, const std::string& model_path,
                    const std::string& strategy,
                    const std::optional<std::string>& config,
                    const std::string& out) {
  const Dataset d = data.load();
  const Classifier model = Classifier::load(model_path);
  const json section = config_section(config, "slicefinder");
  SearchConfig cfg;
  cfg.max_literals = section.value("max_literals", cfg.max_literals);
  cfg.min_size = section.value("min_size", cfg.min_size);
  cfg.effect_threshold = section.value("effect_threshold", cfg.effect_threshold);
  cfg.alpha = section.value("alpha", cfg.alpha);
  cfg.max_results = section.value("max_results", cfg.max_results);
  cfg.one_sided = section.value("one_sided", cfg.one_sided);

  SearchStrategy strat;
  if (strategy == "tree") {
    strat = SearchStrategy::Tree;
  } else if (strategy == "lattice") {
    strat = SearchStrategy::Lattice;
  } else {
    throw std::invalid_argument("strategy must be 'tree' or 'lattice'");
  }
  const SliceReport report = find_problematic(d, model, cfg, strat);
  if (!out.empty()) write_json(out, report.to_json(d.schema()));
  report.print_table(std::cout, d.schema());
  return 0;
}

int run_clean(const DataArgs& data, const std::optional<std::string>& config,
              const std::string& out) {
  const Dataset d = data.load();
  const json section = config_section(config, "clean");
  if (section.empty())
    throw std::invalid_argument("clean needs a config file with a 'clean' section");
  const CleanConfig cfg = CleanConfig::from_json(section);
  const auto [cleaned, report] = mlclean_pipeline(d, cfg);
  write_csv(cleaned, out);
  write_json(out + ".report.json", report.to_json());
  std::cout << "kept " << cleaned.size() << " of " << d.size() << " examples\n";
  return 0;
}

int run_demo_fig2() {
  const Dataset clean = make_fig2_fixture();
  const Dataset poisoned = make_poisoned_fig2_fixture();

  const ThresholdClassifier accurate = fit_threshold_max_accuracy(clean, "X");
  const auto accurate_preds = accurate.classify(clean);
  std::printf("max-accuracy threshold on clean data: cut %.1f, accuracy %.2f, DP %.2f\n",
              accurate.threshold, accuracy(accurate_preds, clean, true),
              demographic_parity(accurate_preds, clean));

  const ThresholdClassifier fair = fit_threshold_fair(clean, "X", 1.0);
  const auto fair_preds = fair.classify(clean);
  std::printf("fair threshold on clean data:         cut %.1f, accuracy %.2f, DP %.2f\n",
              fair.threshold, accuracy(fair_preds, clean, true),
              demographic_parity(fair_preds, clean));

  const ThresholdClassifier fair_poisoned = fit_threshold_fair(poisoned, "X", 1.0);
  const auto poisoned_preds = fair_poisoned.classify(clean);
  std::printf("fair threshold fit on poisoned data:  cut %.1f, clean-data accuracy %.2f, DP %.2f\n",
              fair_poisoned.threshold, accuracy(poisoned_preds, clean, true),
              demographic_parity(poisoned_preds, clean));
  return 0;
}

int run_demo_table1() {
  const Dataset d = make_table1_fixture();
  const CleanConfig cfg = CleanConfig::table1_defaults();

  const auto [cleaned, report] = mlclean_pipeline(d, cfg);
  std::printf("input: %zu examples\n", d.size());
  for (const auto& cluster : report.clusters) {
    std::printf("cluster:");
    for (std::size_t i : cluster) std::printf(" e%zu", i + 1);
    std::printf("\n");
  }
  for (const auto& drop : report.dropped)
    std::printf("dropped e%zu (%s)\n", drop.index + 1, drop.reason.c_str());
  for (const auto& merge : report.merges) {
    std::printf("merged");
    for (std::size_t i : merge.inputs) std::printf(" e%zu", i + 1);
    std::printf(" -> weight %.1f\n", merge.weight);
  }
  std::printf("cleaned: %zu examples\n", cleaned.size());

  // display convention: scale so the largest weight is 1
  double max_w = 0.0;
  for (std::size_t i = 0; i < cleaned.size(); ++i)
    max_w = std::max(max_w, cleaned.weight(i));
  std::printf("weights (scaled to max 1):");
  for (std::size_t i = 0; i < cleaned.size(); ++i)
    std::printf(" %.2f", cleaned.weight(i) / max_w);
  std::printf("\n");

  for (const auto& g : cleaned.groups())
    std::printf("weighted positive rate %s: %.2f\n", g.c_str(),
                weighted_positive_rate(cleaned, g));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"responsible-AI toolkit: fair/robust training, data acquisition "
               "planning, cleaning, batch selection, and slice discovery"};
  app.require_subcommand(1);

  std::optional<std::string> config;
  std::uint64_t seed = 0;
  bool seed_given = false;
  app.add_option("--config", config, "JSON config file with per-module sections");
  app.add_option("--seed", seed, "seed for randomized subcommands")
      ->each([&](const std::string&) { seed_given = true; });

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::string gen_out;
  gen->add_option("--out", gen_out, "output CSV path")->required();

  // poison
  auto* poison = app.add_subcommand("poison", "flip labels in a dataset");
  DataArgs poison_data;
  poison_data.attach(poison);
  double poison_rate = 0.1;
  std::string poison_strategy = "uniform";
  std::string poison_out;
  poison->add_option("--rate", poison_rate, "fraction of labels to flip");
  poison->add_option("--strategy", poison_strategy, "uniform | group:<z>");
  poison->add_option("--out", poison_out, "output CSV path")->required();

  // metrics
  auto* metrics = app.add_subcommand("metrics", "fairness report for predictions");
  DataArgs metrics_data;
  metrics_data.attach(metrics);
  std::string preds_path, metrics_out;
  double eo_tolerance = -1.0;
  metrics->add_option("--preds", preds_path, "predictions file (one 0/1 per line)")
      ->required();
  metrics->add_option("--eo-tolerance", eo_tolerance,
                      "report equalized-odds fairness at this tolerance");
  metrics->add_option("--out", metrics_out, "report JSON path");

  // train
  auto* train = app.add_subcommand("train", "train a classifier");
  DataArgs train_data;
  train_data.attach(train);
  std::string train_mode = "vanilla", train_out, validation_path;
  std::string trajectory_out, diagnostics_out;
  train->add_option("--mode", train_mode, "vanilla | fairbatch | frtrain");
  train->add_option("--out", train_out, "model JSON path")->required();
  train->add_option("--validation", validation_path,
                    "clean validation CSV (frtrain mode)");
  train->add_option("--trajectory-out", trajectory_out,
                    "lambda-path CSV (fairbatch mode)");
  train->add_option("--diagnostics-out", diagnostics_out,
                    "per-epoch diagnostics CSV (frtrain mode)");

  // tune
  auto* tune = app.add_subcommand("tune", "plan selective data acquisition");
  DataArgs tune_data;
  tune_data.attach(tune);
  std::string pool_path, slice_feature, tune_out, curves_out;
  double budget = 0.0, tune_lambda = 1.0;
  tune->add_option("--pool", pool_path, "reserved pool CSV (simulated provider)")
      ->required();
  tune->add_option("--slice-feature", slice_feature,
                   "feature whose values define the slices")
      ->required();
  tune->add_option("--budget", budget, "acquisition budget")->required();
  tune->add_option("--lambda", tune_lambda, "fairness weight");
  tune->add_option("--out", tune_out, "plan trace JSON path")->required();
  tune->add_option("--curves-out", curves_out, "learning-curve CSV path");

  // find-slices
  auto* find = app.add_subcommand("find-slices", "find problematic slices");
  DataArgs find_data;
  find_data.attach(find);
  std::string model_path, find_strategy = "lattice", find_out;
  find->add_option("--model", model_path, "model JSON path")->required();
  find->add_option("--strategy", find_strategy, "tree | lattice");
  find->add_option("--out", find_out, "report JSON path");

  // clean
  auto* clean = app.add_subcommand("clean", "run the cleaning pipeline");
  DataArgs clean_data;
  clean_data.attach(clean);
  std::string clean_out;
  clean->add_option("--out", clean_out, "cleaned CSV path")->required();

  // demos
  auto* demo_fig2 = app.add_subcommand("demo-fig2",
                                       "threshold-classifier fairness demo");
  auto* demo_table1 = app.add_subcommand("demo-table1",
                                         "cleaning-pipeline demo");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const auto require_seed = [&]() {
      if (!seed_given)
        throw CLI::ValidationError("--seed is required for randomized subcommands");
    };
    if (gen->parsed()) {
      require_seed();
      return run_gen_data(config, seed, gen_out);
    }
    if (poison->parsed()) {
      require_seed();
      return run_poison(poison_data, poison_rate, poison_strategy, seed,
                        poison_out);
    }
    if (metrics->parsed())
      return run_metrics(metrics_data, preds_path, eo_tolerance, metrics_out);
    if (train->parsed()) {
      require_seed();
      return run_train(train_data, train_mode, config, seed, train_out,
                       validation_path, trajectory_out, diagnostics_out);
    }
    if (tune->parsed()) {
      require_seed();
      return run_tune(tune_data, pool_path, slice_feature, budget, tune_lambda,
                      config, seed, tune_out, curves_out);
    }
    if (find->parsed())
      return run_find_slices(find_data, model_path, find_strategy, config,
                             find_out);
    if (clean->parsed()) return run_clean(clean_data, config, clean_out);
    if (demo_fig2->parsed()) return run_demo_fig2();
    if (demo_table1->parsed()) return run_demo_table1();
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
