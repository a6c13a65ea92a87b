// Python bindings for the core operations.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "raikit/dataset.hpp"
#include "raikit/fairbatch.hpp"
#include "raikit/frtrain.hpp"
#include "raikit/metrics.hpp"
#include "raikit/mlclean.hpp"
#include "raikit/model.hpp"
#include "raikit/slicefinder.hpp"
#include "raikit/slicetuner.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace raikit;

namespace {

py::object json_to_py(const json& j) {
  switch (j.type()) {
    case json::value_t::null:
      return py::none();
    case json::value_t::boolean:
      return py::bool_(j.get<bool>());
    case json::value_t::number_integer:
      return py::int_(j.get<long long>());
    case json::value_t::number_unsigned:
      return py::int_(j.get<unsigned long long>());
    case json::value_t::number_float:
      return py::float_(j.get<double>());
    case json::value_t::string:
      return py::str(j.get<std::string>());
    case json::value_t::array: {
      py::list out;
      for (const auto& item : j) out.append(json_to_py(item));
      return out;
    }
    case json::value_t::object: {
      py::dict out;
      for (const auto& [key, value] : j.items())
        out[py::str(key)] = json_to_py(value);
      return out;
    }
    default:
      return py::none();
  }
}

json py_to_json(const py::handle& obj) {
  if (obj.is_none()) return nullptr;
  if (py::isinstance<py::bool_>(obj)) return obj.cast<bool>();
  if (py::isinstance<py::int_>(obj)) return obj.cast<long long>();
  if (py::isinstance<py::float_>(obj)) return obj.cast<double>();
  if (py::isinstance<py::str>(obj)) return obj.cast<std::string>();
  if (py::isinstance<py::dict>(obj)) {
    json j = json::object();
    for (const auto& item : obj.cast<py::dict>())
      j[item.first.cast<std::string>()] = py_to_json(item.second);
    return j;
  }
  if (py::isinstance<py::list>(obj) || py::isinstance<py::tuple>(obj)) {
    json j = json::array();
    for (const auto& item : obj.cast<py::sequence>())
      j.push_back(py_to_json(item));
    return j;
  }
  throw std::invalid_argument("unsupported python value in config");
}

SlicePredicate predicate_from_dict(const py::dict& literals) {
  SlicePredicate p;
  for (const auto& item : literals) {
    SliceLiteral lit;
    lit.feature = item.first.cast<std::string>();
    if (py::isinstance<py::str>(item.second)) {
      lit.value = item.second.cast<std::string>();
    } else {
      lit.value = item.second.cast<int>();
    }
    p.literals.push_back(std::move(lit));
  }
  return p;
}

TrainConfig train_config_from_kwargs(double learning_rate, std::size_t epochs,
                                     std::size_t batch_size, std::uint64_t seed,
                                     double weight_decay, std::size_t hidden,
                                     bool include_sensitive) {
  TrainConfig cfg;
  cfg.learning_rate = learning_rate;
  cfg.epochs = epochs;
  cfg.batch_size = batch_size;
  cfg.seed = seed;
  cfg.weight_decay = weight_decay;
  cfg.hidden = hidden;
  cfg.include_sensitive = include_sensitive;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "responsible-AI toolkit core";

  py::class_<Dataset>(m, "Dataset")
      .def_static("from_csv",
                  [](const std::string& csv, const std::string& schema) {
                    return load_csv(csv, load_schema(schema));
                  },
                  py::arg("csv_path"), py::arg("schema_path"))
      .def("__len__", &Dataset::size)
      .def_property_readonly("groups",
                             [](const Dataset& d) { return d.groups(); })
      .def("group_of", [](const Dataset& d, std::size_t i) { return d.group(i); })
      .def("labels",
           [](const Dataset& d) {
             std::vector<int> out(d.size());
             for (std::size_t i = 0; i < d.size(); ++i) out[i] = d.label(i);
             return out;
           })
      .def("weights",
           [](const Dataset& d) {
             std::vector<double> out(d.size());
             for (std::size_t i = 0; i < d.size(); ++i) out[i] = d.weight(i);
             return out;
           })
      .def("to_csv", [](const Dataset& d, const std::string& path) {
        write_csv(d, path);
      })
      .def("schema_json", [](const Dataset& d) {
        return json_to_py(d.schema().to_json());
      });

  m.def("make_fig2_fixture", &make_fig2_fixture);
  m.def("make_poisoned_fig2_fixture", &make_poisoned_fig2_fixture);
  m.def("make_table1_fixture", &make_table1_fixture);

  m.def("gen_synthetic",
        [](const py::dict& spec, std::uint64_t seed) {
          return gen_synthetic(SyntheticSpec::from_json(py_to_json(spec)), seed);
        },
        py::arg("spec"), py::arg("seed"));

  m.def("apply_slice",
        [](const Dataset& d, const py::dict& literals) {
          const auto [slice, complement] =
              apply_slice(d, predicate_from_dict(literals));
          return py::make_tuple(slice.members, complement.members);
        },
        py::arg("dataset"), py::arg("predicate"));

  m.def("poison_label_flip",
        [](const Dataset& d, double rate, std::uint64_t seed,
           const std::string& strategy, const std::string& group) {
          const PoisonStrategy strat = strategy == "group"
                                           ? PoisonStrategy::TargetedGroup
                                           : PoisonStrategy::Uniform;
          auto result = poison_label_flip(d, rate, seed, strat, group);
          return py::make_tuple(std::move(result.poisoned), result.flip_mask);
        },
        py::arg("dataset"), py::arg("rate"), py::arg("seed"),
        py::arg("strategy") = "uniform", py::arg("group") = "");

  // metrics
  m.def("demographic_parity", &demographic_parity);
  m.def("equalized_odds_disparity", &equalized_odds_disparity);
  m.def("accuracy", &accuracy, py::arg("preds"), py::arg("dataset"),
        py::arg("weighted") = true);
  m.def("weighted_positive_rate", &weighted_positive_rate);
  m.def("logistic_loss", &logistic_loss, py::arg("probabilities"),
        py::arg("dataset"), py::arg("weighted") = true);
  m.def("per_example_losses", &per_example_losses);
  m.def("equalized_error_rate_gap", &equalized_error_rate_gap);
  m.def("fairness_report", [](const std::vector<int>& preds, const Dataset& d) {
    return json_to_py(fairness_report(preds, d).to_json());
  });

  // models
  py::class_<Classifier>(m, "Classifier")
      .def("predict", &Classifier::predict)
      .def("classify", &Classifier::classify, py::arg("dataset"),
           py::arg("threshold") = 0.5)
      .def("save", &Classifier::save)
      .def_static("load", &Classifier::load);

  m.def("train_sgd",
        [](const Dataset& d, double learning_rate, std::size_t epochs,
           std::size_t batch_size, std::uint64_t seed, double weight_decay,
           std::size_t hidden, bool include_sensitive) {
          return train_sgd(d, train_config_from_kwargs(
                                  learning_rate, epochs, batch_size, seed,
                                  weight_decay, hidden, include_sensitive));
        },
        py::arg("dataset"), py::arg("learning_rate") = 0.1,
        py::arg("epochs") = 50, py::arg("batch_size") = 32, py::arg("seed") = 0,
        py::arg("weight_decay") = 0.0, py::arg("hidden") = 0,
        py::arg("include_sensitive") = false);

  m.def("train_fairbatch",
        [](const Dataset& d, const std::string& target, double alpha,
           double learning_rate, std::size_t epochs, std::size_t batch_size,
           std::uint64_t seed, std::size_t hidden) {
          FairBatchConfig fb;
          fb.alpha = alpha;
          fb.target = target == "dp" ? FairnessTarget::DemographicParity
                                     : FairnessTarget::EqualizedOdds;
          auto sampler =
              make_fairbatch_sampler(d, fb, batch_size, mix_seed(seed, 17));
          const Classifier model =
              train_sgd(d,
                        train_config_from_kwargs(learning_rate, epochs,
                                                 batch_size, seed, 0.0, hidden,
                                                 false),
                        sampler.get());
          py::list rows;
          for (const auto& r : sampler->trajectory()) {
            py::dict row;
            row["epoch"] = r.epoch;
            row["lambda1"] = r.lambda_y0;
            row["lambda2"] = r.lambda_y1;
            row["disparity"] = r.disparity;
            rows.append(row);
          }
          return py::make_tuple(model, rows);
        },
        py::arg("dataset"), py::arg("target") = "eo", py::arg("alpha") = 0.005,
        py::arg("learning_rate") = 0.1, py::arg("epochs") = 50,
        py::arg("batch_size") = 32, py::arg("seed") = 0, py::arg("hidden") = 0);

  py::class_<ThresholdClassifier>(m, "ThresholdClassifier")
      .def_readonly("feature", &ThresholdClassifier::feature)
      .def_readonly("threshold", &ThresholdClassifier::threshold)
      .def("classify", &ThresholdClassifier::classify);

  m.def("fit_threshold_max_accuracy", &fit_threshold_max_accuracy);
  m.def("fit_threshold_fair", &fit_threshold_fair);

  // slice tuner
  m.def("fit_learning_curve",
        [](const std::vector<std::pair<double, double>>& points) {
          const CurveFit fit = fit_learning_curve(points);
          py::dict out;
          out["b"] = fit.curve.b;
          out["a"] = fit.curve.a;
          out["residual"] = fit.residual;
          return out;
        });
  m.def("optimize_allocation",
        [](const std::vector<double>& sizes, const std::vector<double>& b,
           const std::vector<double>& a, const std::vector<double>& costs,
           double budget, double fairness_weight) {
          AcquisitionProblem p;
          p.sizes = sizes;
          for (std::size_t i = 0; i < b.size(); ++i)
            p.curves.push_back({b[i], a[i]});
          p.unit_costs = costs;
          p.budget = budget;
          p.fairness_weight = fairness_weight;
          return optimize_allocation(p).amounts;
        },
        py::arg("sizes"), py::arg("b"), py::arg("a"), py::arg("costs"),
        py::arg("budget"), py::arg("fairness_weight") = 0.0);
  m.def("imbalance_ratio", [](const std::vector<double>& sizes) {
    return imbalance_ratio(sizes);
  });
  m.def("baseline_uniform",
        [](const std::vector<double>& sizes, double budget,
           const std::vector<double>& costs) {
          return baseline_uniform(sizes, budget, costs).amounts;
        });
  m.def("baseline_waterfilling",
        [](const std::vector<double>& sizes, double budget,
           const std::vector<double>& costs) {
          return baseline_waterfilling(sizes, budget, costs).amounts;
        });

  // slice finder
  m.def("effect_size", [](const std::vector<double>& s,
                          const std::vector<double>& c) {
    return effect_size(s, c);
  });
  m.def("significance_test",
        [](const std::vector<double>& s, const std::vector<double>& c,
           bool one_sided) { return significance_test(s, c, one_sided); },
        py::arg("slice_losses"), py::arg("complement_losses"),
        py::arg("one_sided") = false);
  m.def("find_problematic",
        [](const Dataset& d, const Classifier& model, const std::string& strategy,
           std::size_t max_literals, std::size_t min_size,
           double effect_threshold, double alpha, std::size_t max_results) {
          SearchConfig cfg;
          cfg.max_literals = max_literals;
          cfg.min_size = min_size;
          cfg.effect_threshold = effect_threshold;
          cfg.alpha = alpha;
          cfg.max_results = max_results;
          const SliceReport report = find_problematic(
              d, model, cfg,
              strategy == "tree" ? SearchStrategy::Tree : SearchStrategy::Lattice);
          return json_to_py(report.to_json(d.schema()));
        },
        py::arg("dataset"), py::arg("model"), py::arg("strategy") = "lattice",
        py::arg("max_literals") = 3, py::arg("min_size") = 30,
        py::arg("effect_threshold") = 0.4, py::arg("alpha") = 0.05,
        py::arg("max_results") = 10);

  // mlclean
  m.def("mlclean_pipeline",
        [](const Dataset& d, const py::object& config) {
          const CleanConfig cfg = config.is_none()
                                      ? CleanConfig::table1_defaults()
                                      : CleanConfig::from_json(py_to_json(config));
          auto [cleaned, report] = mlclean_pipeline(d, cfg);
          return py::make_tuple(std::move(cleaned), json_to_py(report.to_json()));
        },
        py::arg("dataset"), py::arg("config") = py::none());
  m.def("reweigh_for_dp", [](const Dataset& d) {
    auto [reweighed, factors] = reweigh_for_dp(d);
    py::list out;
    for (const auto& f : factors) {
      py::dict row;
      row["group"] = f.group;
      row["label"] = f.label;
      row["factor"] = f.factor;
      out.append(row);
    }
    return py::make_tuple(std::move(reweighed), out);
  });

  // frtrain
  m.def("train_frtrain",
        [](const Dataset& train, const Dataset& validation,
           double lambda_fairness, double lambda_robustness, bool reweighting,
           std::size_t ramp_start_epoch, std::size_t ramp_full_epoch,
           double lr, std::size_t epochs, std::size_t batch_size,
           std::uint64_t seed,
           const std::optional<std::vector<std::size_t>>& flip_mask) {
          FRConfig cfg;
          cfg.lambda_fairness = lambda_fairness;
          cfg.lambda_robustness = lambda_robustness;
          cfg.reweighting = reweighting;
          cfg.ramp_start_epoch = ramp_start_epoch;
          cfg.ramp_full_epoch = ramp_full_epoch;
          cfg.lr_classifier = lr;
          cfg.lr_fair_disc = lr;
          cfg.lr_robust_disc = lr;
          cfg.epochs = epochs;
          cfg.batch_size = batch_size;
          cfg.seed = seed;
          const FRResult result = train_frtrain(
              train, validation, cfg, flip_mask ? &*flip_mask : nullptr);
          py::dict diag;
          diag["final_weights"] = result.diagnostics.final_weights;
          py::list rows;
          for (const auto& r : result.diagnostics.epochs) {
            py::dict row;
            row["epoch"] = r.epoch;
            row["accuracy"] = r.accuracy;
            row["dp"] = r.dp;
            rows.append(row);
          }
          diag["epochs"] = rows;
          return py::make_tuple(result.classifier, diag);
        },
        py::arg("train"), py::arg("validation"), py::arg("lambda_fairness") = 1.0,
        py::arg("lambda_robustness") = 1.0, py::arg("reweighting") = true,
        py::arg("ramp_start_epoch") = 10, py::arg("ramp_full_epoch") = 30,
        py::arg("lr") = 0.05, py::arg("epochs") = 100, py::arg("batch_size") = 32,
        py::arg("seed") = 0, py::arg("flip_mask") = py::none());

  m.def("evaluate_tradeoff", [](const Classifier& model, const Dataset& test) {
    return evaluate_tradeoff(model, test);
  });
}
