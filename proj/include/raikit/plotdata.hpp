#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

namespace raikit {

enum class PlotKind { LearningCurve, LambdaPath, Tradeoff };

PlotKind plot_kind_from_string(const std::string& s);

/// Renders a JSON trace (as written by the train/tune subcommands) into a
/// tidy CSV with one row per point. Throws when the trace does not carry
/// the fields the kind requires; an empty trace yields a header-only CSV.
///
/// Columns: learning-curve -> slice,n,loss
///          lambda-path    -> epoch,lambda1,lambda2,disparity
///          tradeoff       -> epoch,accuracy,dp
std::string emit_plot_data(PlotKind kind, const nlohmann::json& trace);

}  // namespace raikit
