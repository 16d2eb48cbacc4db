#include "koop/svgplot.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace koop::cli {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 480.0;
constexpr double kMargin = 56.0;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// Each series becomes a list of (x, y) rows in data coordinates.
std::vector<Eigen::MatrixXd> to_plane(const std::vector<Series>& series, PlotKind kind) {
  std::vector<Eigen::MatrixXd> out;
  for (const auto& s : series) {
    if (s.pts.cols() < 1) throw std::invalid_argument("emit_plot: empty series '" + s.label + "'");
    Eigen::MatrixXd pl(2, s.pts.cols());
    switch (kind) {
      case PlotKind::trajectory2d:
        if (s.pts.rows() < 2) throw std::invalid_argument("emit_plot: 2d series needs two rows");
        pl.row(0) = s.pts.row(0);
        pl.row(1) = s.pts.row(1);
        break;
      case PlotKind::trajectory3d_projection:
        if (s.pts.rows() < 3) throw std::invalid_argument("emit_plot: 3d series needs three rows");
        pl.row(0) = s.pts.row(0);
        pl.row(1) = s.pts.row(2);
        break;
      case PlotKind::spectrum:
      case PlotKind::trace:
        for (int k = 0; k < s.pts.cols(); ++k) {
          pl(0, k) = k + 1;
          pl(1, k) = s.pts(0, k);
        }
        break;
    }
    out.push_back(std::move(pl));
  }
  return out;
}

}  // namespace

void emit_plot(const std::vector<Series>& series, PlotKind kind,
               const std::filesystem::path& path) {
  if (series.empty()) throw std::invalid_argument("emit_plot: no series");
  const auto plane = to_plane(series, kind);

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& pl : plane) {
    xmin = std::min(xmin, pl.row(0).minCoeff());
    xmax = std::max(xmax, pl.row(0).maxCoeff());
    ymin = std::min(ymin, pl.row(1).minCoeff());
    ymax = std::max(ymax, pl.row(1).maxCoeff());
  }
  if (!(xmax > xmin)) xmax = xmin + 1.0;
  if (!(ymax > ymin)) ymax = ymin + 1.0;
  const double padx = 0.05 * (xmax - xmin), pady = 0.05 * (ymax - ymin);
  xmin -= padx, xmax += padx, ymin -= pady, ymax += pady;

  auto sx = [&](double x) {
    return kMargin + (x - xmin) / (xmax - xmin) * (kWidth - 2 * kMargin);
  };
  auto sy = [&](double y) {
    return kHeight - kMargin - (y - ymin) / (ymax - ymin) * (kHeight - 2 * kMargin);
  };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
         num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<rect x=\"" + num(kMargin) + "\" y=\"" + num(kMargin) + "\" width=\"" +
         num(kWidth - 2 * kMargin) + "\" height=\"" + num(kHeight - 2 * kMargin) +
         "\" fill=\"none\" stroke=\"#888\" stroke-width=\"1\"/>\n";
  svg += "<text x=\"" + num(kMargin) + "\" y=\"" + num(kHeight - kMargin / 3) +
         "\" font-size=\"12\" fill=\"#444\">" + num(xmin) + "</text>\n";
  svg += "<text x=\"" + num(kWidth - kMargin) + "\" y=\"" + num(kHeight - kMargin / 3) +
         "\" font-size=\"12\" fill=\"#444\" text-anchor=\"end\">" + num(xmax) + "</text>\n";
  svg += "<text x=\"" + num(kMargin / 4) + "\" y=\"" + num(kHeight - kMargin) +
         "\" font-size=\"12\" fill=\"#444\">" + num(ymin) + "</text>\n";
  svg += "<text x=\"" + num(kMargin / 4) + "\" y=\"" + num(kMargin) +
         "\" font-size=\"12\" fill=\"#444\">" + num(ymax) + "</text>\n";

  for (std::size_t s = 0; s < plane.size(); ++s) {
    const char* color = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
    svg += "<text x=\"" + num(kMargin + 8) + "\" y=\"" + num(kMargin + 16 + 16.0 * s) +
           "\" font-size=\"13\" fill=\"" + color + "\">" + series[s].label + "</text>\n";
    if (kind == PlotKind::spectrum) {
      for (int k = 0; k < plane[s].cols(); ++k) {
        svg += "<circle cx=\"" + num(sx(plane[s](0, k))) + "\" cy=\"" + num(sy(plane[s](1, k))) +
               "\" r=\"4\" fill=\"" + color + "\"/>\n";
      }
    } else {
      svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
             "\" stroke-width=\"1.5\" points=\"";
      for (int k = 0; k < plane[s].cols(); ++k) {
        if (k) svg += ' ';
        svg += num(sx(plane[s](0, k))) + "," + num(sy(plane[s](1, k)));
      }
      svg += "\"/>\n";
    }
  }
  svg += "</svg>\n";

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("emit_plot: cannot open '" + path.string() + "'");
  out << svg;
  if (!out) throw std::runtime_error("emit_plot: write failed for '" + path.string() + "'");
}

}  // namespace koop::cli
