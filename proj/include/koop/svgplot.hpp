#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

namespace koop::cli {

struct Series {
  std::string label;
  Eigen::MatrixXd pts;  // dim x count
};

enum class PlotKind { trajectory2d, trajectory3d_projection, spectrum, trace };

/// Self-contained deterministic SVG: trajectory kinds draw one polyline per
/// series (the 3d projection maps components 1 and 3 to the plane), spectrum
/// draws one circle marker per value, trace a single polyline over iteration
/// index. Identical inputs produce identical bytes.
void emit_plot(const std::vector<Series>& series, PlotKind kind,
               const std::filesystem::path& path);

}  // namespace koop::cli
