#include "raikit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "raikit/rng.hpp"

namespace raikit {

using nlohmann::json;

// ---- Schema -----------------------------------------------------------------

int Schema::feature_index(const std::string& name) const {
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

const FeatureDecl& Schema::feature(const std::string& name) const {
  int idx = feature_index(name);
  if (idx < 0) throw std::invalid_argument("unknown feature: " + name);
  return features[idx];
}

int Schema::sensitive_index() const { return feature_index(sensitive_feature); }

Schema Schema::from_json(const json& j) {
  Schema s;
  for (const auto& f : j.at("features")) {
    FeatureDecl decl;
    decl.name = f.at("name").get<std::string>();
    const std::string kind = f.value("kind", "categorical");
    if (kind == "categorical") {
      decl.kind = FeatureKind::Categorical;
    } else if (kind == "numeric") {
      decl.kind = FeatureKind::Numeric;
    } else {
      throw std::invalid_argument("unknown feature kind: " + kind);
    }
    if (f.contains("vocabulary"))
      decl.vocabulary = f.at("vocabulary").get<std::vector<std::string>>();
    if (f.contains("bin_edges"))
      decl.bin_edges = f.at("bin_edges").get<std::vector<double>>();
    if (!std::is_sorted(decl.bin_edges.begin(), decl.bin_edges.end()))
      throw std::invalid_argument("bin edges must be ascending for feature " +
                                  decl.name);
    s.features.push_back(std::move(decl));
  }
  s.sensitive_feature = j.at("sensitive").get<std::string>();
  s.label_column = j.value("label", "label");
  if (j.contains("weight") && !j.at("weight").is_null())
    s.weight_column = j.at("weight").get<std::string>();
  int si = s.feature_index(s.sensitive_feature);
  if (si < 0)
    throw std::invalid_argument("sensitive column is not a declared feature: " +
                                s.sensitive_feature);
  if (s.features[si].kind != FeatureKind::Categorical)
    throw std::invalid_argument("sensitive feature must be categorical");
  return s;
}

json Schema::to_json() const {
  json features_j = json::array();
  for (const auto& f : features) {
    json fj;
    fj["name"] = f.name;
    fj["kind"] = f.kind == FeatureKind::Categorical ? "categorical" : "numeric";
    if (!f.vocabulary.empty()) fj["vocabulary"] = f.vocabulary;
    if (!f.bin_edges.empty()) fj["bin_edges"] = f.bin_edges;
    features_j.push_back(fj);
  }
  json j;
  j["features"] = features_j;
  j["sensitive"] = sensitive_feature;
  j["label"] = label_column;
  if (weight_column) j["weight"] = *weight_column;
  return j;
}

// ---- Dataset ----------------------------------------------------------------

namespace {

void validate_example(const Schema& schema, const Example& e,
                      std::size_t index) {
  const auto fail = [&](const std::string& what) {
    throw std::invalid_argument("example " + std::to_string(index) + ": " +
                                what);
  };
  if (e.values.size() != schema.features.size()) fail("wrong value arity");
  if (e.label != 0 && e.label != 1) fail("label must be 0 or 1");
  if (!(e.weight >= 0.0)) fail("weight must be >= 0");
  for (std::size_t f = 0; f < schema.features.size(); ++f) {
    const FeatureDecl& decl = schema.features[f];
    if (decl.kind == FeatureKind::Categorical) {
      const auto* tok = std::get_if<std::string>(&e.values[f]);
      if (!tok) fail("feature " + decl.name + " must be categorical");
      if (std::find(decl.vocabulary.begin(), decl.vocabulary.end(), *tok) ==
          decl.vocabulary.end())
        fail("value '" + *tok + "' not in vocabulary of " + decl.name);
    } else {
      const auto* x = std::get_if<double>(&e.values[f]);
      if (!x) fail("feature " + decl.name + " must be numeric");
      if (!std::isfinite(*x)) fail("non-finite value for " + decl.name);
    }
  }
}

}  // namespace

Dataset::Dataset(Schema schema, std::vector<Example> examples)
    : schema_(std::move(schema)), examples_(std::move(examples)) {
  int si = schema_.sensitive_index();
  if (si < 0)
    throw std::invalid_argument("schema has no sensitive feature: " +
                                schema_.sensitive_feature);
  if (schema_.features[si].vocabulary.empty())
    throw std::invalid_argument("group set must be non-empty");
  for (std::size_t i = 0; i < examples_.size(); ++i)
    validate_example(schema_, examples_[i], i);
}

const std::string& Dataset::group(std::size_t i) const {
  return std::get<std::string>(examples_[i].values[schema_.sensitive_index()]);
}

const std::vector<std::string>& Dataset::groups() const {
  return schema_.features[schema_.sensitive_index()].vocabulary;
}

double Dataset::numeric(std::size_t i, int feature) const {
  const auto* x = std::get_if<double>(&examples_[i].values[feature]);
  if (!x)
    throw std::invalid_argument("feature " + schema_.features[feature].name +
                                " is not numeric");
  return *x;
}

const std::string& Dataset::categorical(std::size_t i, int feature) const {
  const auto* tok = std::get_if<std::string>(&examples_[i].values[feature]);
  if (!tok)
    throw std::invalid_argument("feature " + schema_.features[feature].name +
                                " is not categorical");
  return *tok;
}

Dataset Dataset::with_examples(std::vector<Example> ex) const {
  return Dataset(schema_, std::move(ex));
}

// ---- Slicing ----------------------------------------------------------------

int bin_index(const FeatureDecl& f, double x) {
  if (f.bin_count() == 0) return -1;
  if (x < f.bin_edges.front() || x > f.bin_edges.back()) return -1;
  if (x == f.bin_edges.back()) return static_cast<int>(f.bin_count()) - 1;
  auto it = std::upper_bound(f.bin_edges.begin(), f.bin_edges.end(), x);
  return static_cast<int>(it - f.bin_edges.begin()) - 1;
}

void SlicePredicate::validate(const Schema& schema) const {
  std::set<std::string> seen;
  for (const auto& lit : literals) {
    if (!seen.insert(lit.feature).second)
      throw std::invalid_argument("predicate repeats feature " + lit.feature);
    const FeatureDecl& decl = schema.feature(lit.feature);
    if (decl.kind == FeatureKind::Categorical) {
      if (!std::holds_alternative<std::string>(lit.value))
        throw std::invalid_argument("feature " + lit.feature +
                                    " takes a categorical token");
    } else {
      if (!std::holds_alternative<int>(lit.value))
        throw std::invalid_argument("numeric feature " + lit.feature +
                                    " takes a bin index");
      int bin = std::get<int>(lit.value);
      if (bin < 0 || bin >= static_cast<int>(decl.bin_count()))
        throw std::invalid_argument("bin " + std::to_string(bin) +
                                    " out of range for " + lit.feature);
    }
  }
}

bool SlicePredicate::matches(const Dataset& d, std::size_t i) const {
  const Schema& schema = d.schema();
  for (const auto& lit : literals) {
    int f = schema.feature_index(lit.feature);
    if (f < 0) throw std::invalid_argument("unknown feature: " + lit.feature);
    const FeatureDecl& decl = schema.features[f];
    if (decl.kind == FeatureKind::Categorical) {
      if (d.categorical(i, f) != std::get<std::string>(lit.value)) return false;
    } else {
      if (bin_index(decl, d.numeric(i, f)) != std::get<int>(lit.value))
        return false;
    }
  }
  return true;
}

std::string SlicePredicate::to_string(const Schema& schema) const {
  if (literals.empty()) return "(all)";
  std::ostringstream out;
  for (std::size_t i = 0; i < literals.size(); ++i) {
    if (i) out << " & ";
    const auto& lit = literals[i];
    out << lit.feature << "=";
    if (const auto* tok = std::get_if<std::string>(&lit.value)) {
      out << *tok;
    } else {
      int bin = std::get<int>(lit.value);
      int f = schema.feature_index(lit.feature);
      if (f >= 0 && schema.features[f].bin_count() > 0) {
        const auto& e = schema.features[f].bin_edges;
        out << "[" << e[bin] << "," << e[bin + 1]
            << (bin + 1 == static_cast<int>(schema.features[f].bin_count())
                    ? "]"
                    : ")");
      } else {
        out << "bin" << bin;
      }
    }
  }
  return out.str();
}

std::pair<Slice, Slice> apply_slice(const Dataset& d, const SlicePredicate& p) {
  p.validate(d.schema());
  Slice slice{p, {}};
  Slice complement{SlicePredicate{}, {}};
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (p.matches(d, i)) {
      slice.members.push_back(i);
    } else {
      complement.members.push_back(i);
    }
  }
  return {std::move(slice), std::move(complement)};
}

// ---- CSV / schema IO --------------------------------------------------------

Schema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open schema file: " + path);
  json j;
  in >> j;
  return Schema::from_json(j);
}

void save_schema(const Schema& schema, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write schema file: " + path);
  out << schema.to_json().dump(2) << "\n";
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s, std::size_t row,
                    const std::string& column) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty())
    throw std::invalid_argument("row " + std::to_string(row) +
                                ": unparseable numeric '" + s + "' in column " +
                                column);
  return v;
}

}  // namespace

Dataset load_csv(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open csv file: " + path);

  std::string header_line;
  if (!std::getline(in, header_line))
    throw std::invalid_argument("csv file is empty: " + path);
  const std::vector<std::string> header = split_csv_line(header_line);

  const auto column_of = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw std::invalid_argument("csv header misses column: " + name);
    return static_cast<std::size_t>(it - header.begin());
  };

  std::vector<std::size_t> feature_cols;
  for (const auto& f : schema.features) feature_cols.push_back(column_of(f.name));
  const std::size_t label_col = column_of(schema.label_column);
  std::optional<std::size_t> weight_col;
  if (schema.weight_column) {
    auto it = std::find(header.begin(), header.end(), *schema.weight_column);
    if (it != header.end())
      weight_col = static_cast<std::size_t>(it - header.begin());
  } else {
    auto it = std::find(header.begin(), header.end(), std::string("weight"));
    if (it != header.end())
      weight_col = static_cast<std::size_t>(it - header.begin());
  }

  Schema resolved = schema;
  std::vector<Example> examples;
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::size_t row_number = 1;  // header is row 1
  while (std::getline(in, line)) {
    ++row_number;
    if (line.empty()) continue;
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw std::invalid_argument(
          "row " + std::to_string(row_number) + ": expected " +
          std::to_string(header.size()) + " fields, got " +
          std::to_string(fields.size()));

    Example e;
    for (std::size_t f = 0; f < schema.features.size(); ++f) {
      const FeatureDecl& decl = schema.features[f];
      const std::string& raw = fields[feature_cols[f]];
      if (decl.kind == FeatureKind::Numeric) {
        e.values.emplace_back(parse_double(raw, row_number, decl.name));
      } else {
        e.values.emplace_back(raw);
        auto& vocab = resolved.features[f].vocabulary;
        if (schema.features[f].vocabulary.empty()) {
          if (std::find(vocab.begin(), vocab.end(), raw) == vocab.end())
            vocab.push_back(raw);  // infer in first-appearance order
        } else if (std::find(vocab.begin(), vocab.end(), raw) == vocab.end()) {
          throw std::invalid_argument("row " + std::to_string(row_number) +
                                      ": value '" + raw +
                                      "' not in vocabulary of " + decl.name);
        }
      }
    }
    const std::string& label_raw = fields[label_col];
    if (label_raw == "0") {
      e.label = 0;
    } else if (label_raw == "1") {
      e.label = 1;
    } else {
      throw std::invalid_argument("row " + std::to_string(row_number) +
                                  ": label must be 0 or 1, got '" + label_raw +
                                  "'");
    }
    e.weight = weight_col ? parse_double(fields[*weight_col], row_number,
                                         "weight")
                          : 1.0;
    if (e.weight < 0)
      throw std::invalid_argument("row " + std::to_string(row_number) +
                                  ": negative weight");
    examples.push_back(std::move(e));
  }
  return Dataset(std::move(resolved), std::move(examples));
}

void write_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write csv file: " + path);
  const Schema& schema = d.schema();
  for (std::size_t f = 0; f < schema.features.size(); ++f)
    out << schema.features[f].name << ",";
  out << schema.label_column << ","
      << (schema.weight_column ? *schema.weight_column : std::string("weight"))
      << "\n";
  std::ostringstream buf;
  buf.precision(17);
  for (std::size_t i = 0; i < d.size(); ++i) {
    buf.str("");
    for (std::size_t f = 0; f < schema.features.size(); ++f) {
      if (schema.features[f].kind == FeatureKind::Numeric) {
        buf << d.numeric(i, static_cast<int>(f));
      } else {
        buf << d.categorical(i, static_cast<int>(f));
      }
      buf << ",";
    }
    buf << d.label(i) << "," << d.weight(i) << "\n";
    out << buf.str();
  }
}

// ---- Synthetic generation ----------------------------------------------------

SyntheticSpec SyntheticSpec::from_json(const json& j) {
  SyntheticSpec s;
  s.groups = j.at("groups").get<std::vector<std::string>>();
  s.group_sizes = j.at("group_sizes").get<std::vector<std::size_t>>();
  s.positive_rates = j.at("positive_rates").get<std::vector<double>>();
  s.feature_count = j.value("feature_count", std::size_t{2});
  s.sensitive_name = j.value("sensitive_name", std::string("group"));
  if (j.contains("bin_edges"))
    s.bin_edges = j.at("bin_edges").get<std::vector<double>>();
  for (const auto& cell_pair : j.at("cells")) {
    std::array<SyntheticCell, 2> pair;
    for (int y = 0; y < 2; ++y) {
      const auto& cj = cell_pair.at(y);
      SyntheticCell c;
      if (cj.at("means").is_array()) {
        c.means = cj.at("means").get<std::vector<double>>();
      } else {
        c.means = {cj.at("means").get<double>()};
      }
      c.spread = cj.value("spread", 1.0);
      pair[y] = std::move(c);
    }
    s.cells.push_back(std::move(pair));
  }
  return s;
}

Dataset gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  const std::size_t g = spec.groups.size();
  if (g == 0) throw std::invalid_argument("no groups declared");
  if (spec.group_sizes.size() != g || spec.positive_rates.size() != g ||
      spec.cells.size() != g)
    throw std::invalid_argument("group parameter arity mismatch");
  std::size_t total = 0;
  for (std::size_t z = 0; z < g; ++z) {
    total += spec.group_sizes[z];
    if (spec.positive_rates[z] < 0.0 || spec.positive_rates[z] > 1.0)
      throw std::invalid_argument("label rate must be in [0,1]");
  }
  if (total == 0) throw std::invalid_argument("all group sizes are zero");

  Schema schema;
  for (std::size_t f = 0; f < spec.feature_count; ++f) {
    FeatureDecl decl;
    decl.name = "x" + std::to_string(f);
    decl.kind = FeatureKind::Numeric;
    decl.bin_edges = spec.bin_edges;
    schema.features.push_back(std::move(decl));
  }
  FeatureDecl sens;
  sens.name = spec.sensitive_name;
  sens.kind = FeatureKind::Categorical;
  sens.vocabulary = spec.groups;
  schema.features.push_back(std::move(sens));
  schema.sensitive_feature = spec.sensitive_name;

  Rng rng(seed);
  std::vector<Example> examples;
  examples.reserve(total);
  for (std::size_t z = 0; z < g; ++z) {
    for (std::size_t i = 0; i < spec.group_sizes[z]; ++i) {
      const int y = rng.bernoulli(spec.positive_rates[z]) ? 1 : 0;
      const SyntheticCell& cell = spec.cells[z][y];
      Example e;
      e.label = y;
      for (std::size_t f = 0; f < spec.feature_count; ++f) {
        const double mean =
            cell.means.size() == 1 ? cell.means[0] : cell.means.at(f);
        e.values.emplace_back(rng.normal(mean, cell.spread));
      }
      e.values.emplace_back(spec.groups[z]);
      examples.push_back(std::move(e));
    }
  }
  return Dataset(std::move(schema), std::move(examples));
}

// ---- Label-flip poisoning -----------------------------------------------------

PoisonResult poison_label_flip(const Dataset& d, double rate,
                               std::uint64_t seed, PoisonStrategy strategy,
                               const std::string& target_group) {
  if (rate < 0.0 || rate > 1.0)
    throw std::invalid_argument("poison rate must be in [0,1]");

  std::vector<std::size_t> pool;
  if (strategy == PoisonStrategy::Uniform) {
    pool.resize(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) pool[i] = i;
  } else {
    const auto& gs = d.groups();
    if (std::find(gs.begin(), gs.end(), target_group) == gs.end())
      throw std::invalid_argument("unknown target group: " + target_group);
    for (std::size_t i = 0; i < d.size(); ++i)
      if (d.group(i) == target_group) pool.push_back(i);
  }

  const std::size_t flips =
      static_cast<std::size_t>(std::floor(rate * static_cast<double>(pool.size())));
  Rng rng(mix_seed(seed, 0xf11fULL));
  rng.shuffle(pool);
  std::vector<std::size_t> mask(pool.begin(), pool.begin() + flips);
  std::sort(mask.begin(), mask.end());

  std::vector<Example> examples = d.examples();
  for (std::size_t idx : mask) examples[idx].label = 1 - examples[idx].label;
  return {d.with_examples(std::move(examples)), std::move(mask)};
}

// ---- Worked-example fixtures ---------------------------------------------------

namespace {

Dataset make_fig2(bool poisoned) {
  Schema schema;
  FeatureDecl x;
  x.name = "X";
  x.kind = FeatureKind::Numeric;
  schema.features.push_back(x);
  FeatureDecl race;
  race.name = "race";
  race.kind = FeatureKind::Categorical;
  race.vocabulary = {"w", "b"};
  schema.features.push_back(race);
  schema.sensitive_feature = "race";

  // position: (race, label); negatives occupy positions 1..4
  const char* races = "wbwwwbbbwb";
  const int labels[10] = {0, 0, 0, 0, 1, 1, 1, 1, 1, 1};
  std::vector<Example> examples;
  for (int i = 0; i < 10; ++i) {
    Example e;
    e.values.emplace_back(static_cast<double>(i + 1));
    e.values.emplace_back(std::string(1, races[i]));
    e.label = labels[i];
    if (poisoned && (i == 4 || i == 6)) e.label = 0;
    examples.push_back(std::move(e));
  }
  return Dataset(std::move(schema), std::move(examples));
}

}  // namespace

Dataset make_fig2_fixture() { return make_fig2(false); }

Dataset make_poisoned_fig2_fixture() { return make_fig2(true); }

Dataset make_table1_fixture() {
  Schema schema;
  FeatureDecl name;
  name.name = "Name";
  name.kind = FeatureKind::Categorical;
  name.vocabulary = {"John", "Joe", "Joseph", "Sally"};
  schema.features.push_back(name);
  FeatureDecl gender;
  gender.name = "Gender";
  gender.kind = FeatureKind::Categorical;
  gender.vocabulary = {"M", "F"};
  schema.features.push_back(gender);
  FeatureDecl age;
  age.name = "Age";
  age.kind = FeatureKind::Numeric;
  schema.features.push_back(age);
  schema.sensitive_feature = "Gender";

  const struct {
    const char* name;
    const char* gender;
    double age;
    int label;
  } rows[6] = {
      {"John", "M", 20, 1},  {"Joe", "M", 20, 0},   {"Joseph", "M", 20, 0},
      {"Sally", "F", 30, 1}, {"Sally", "F", 40, 0}, {"Sally", "F", 300, 1},
  };
  std::vector<Example> examples;
  for (const auto& r : rows) {
    Example e;
    e.values.emplace_back(std::string(r.name));
    e.values.emplace_back(std::string(r.gender));
    e.values.emplace_back(r.age);
    e.label = r.label;
    examples.push_back(std::move(e));
  }
  return Dataset(std::move(schema), std::move(examples));
}

}  // namespace raikit
