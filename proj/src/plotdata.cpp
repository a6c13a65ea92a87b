#include "raikit/plotdata.hpp"

#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace raikit {

using nlohmann::json;

PlotKind plot_kind_from_string(const std::string& s) {
  if (s == "learning-curve") return PlotKind::LearningCurve;
  if (s == "lambda-path") return PlotKind::LambdaPath;
  if (s == "tradeoff") return PlotKind::Tradeoff;
  throw std::invalid_argument("unknown plot kind: " + s);
}

namespace {

const json& require_array(const json& trace, const char* key,
                          const char* kind) {
  if (!trace.is_object() || !trace.contains(key) || !trace.at(key).is_array())
    throw std::invalid_argument(std::string("trace does not match kind '") +
                                kind + "': missing array '" + key + "'");
  return trace.at(key);
}

}  // namespace

std::string emit_plot_data(PlotKind kind, const json& trace) {
  std::ostringstream out;
  out.precision(12);
  switch (kind) {
    case PlotKind::LearningCurve: {
      const json& points = require_array(trace, "points", "learning-curve");
      out << "slice,n,loss\n";
      for (const auto& p : points)
        out << p.at("slice").get<std::string>() << ","
            << p.at("n").get<double>() << "," << p.at("loss").get<double>()
            << "\n";
      break;
    }
    case PlotKind::LambdaPath: {
      const json& rows = require_array(trace, "trajectory", "lambda-path");
      out << "epoch,lambda1,lambda2,disparity\n";
      for (const auto& r : rows)
        out << r.at("epoch").get<std::size_t>() << ","
            << r.at("lambda1").get<double>() << ","
            << r.at("lambda2").get<double>() << ","
            << r.at("disparity").get<double>() << "\n";
      break;
    }
    case PlotKind::Tradeoff: {
      const json& rows = require_array(trace, "epochs", "tradeoff");
      out << "epoch,accuracy,dp\n";
      for (const auto& r : rows)
        out << r.at("epoch").get<std::size_t>() << ","
            << r.at("accuracy").get<double>() << "," << r.at("dp").get<double>()
            << "\n";
      break;
    }
  }
  return out.str();
}

}  // namespace raikit
