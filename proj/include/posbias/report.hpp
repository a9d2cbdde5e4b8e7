#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "posbias/core.hpp"

namespace posbias {

// curves.csv: `segment,position,accuracy,cv`, k-major, 6 decimals.
std::string render_curves_csv(const std::vector<BiasCurve>& curves);
void emit_curves_csv(const std::vector<BiasCurve>& curves, const std::filesystem::path& path);
// Inverse of the above; metric ids and bias flags are not stored in the CSV.
std::vector<BiasCurve> parse_curves_csv(const std::string& text);
std::vector<BiasCurve> read_curves_csv(const std::filesystem::path& path);

// importance.csv: `series,index,x,accuracy` with one `segment` row per
// anchor followed by the `interpolated` samples.
std::string render_importance_csv(const ImportanceCurve& curve);
void emit_importance_csv(const ImportanceCurve& curve, const std::filesystem::path& path);

struct PlotSeries {
  std::string label;
  std::vector<double> xs;
  std::vector<double> ys;
};

struct PlotSpec {
  std::string title;
  std::string x_label = "position";
  std::string y_label = "accuracy";
  std::vector<PlotSeries> series;
  bool integer_x_ticks = true;
};

PlotSpec bias_plot(const std::vector<BiasCurve>& curves, std::string title);
PlotSpec importance_plot(const ImportanceCurve& curve, std::string title);

// Static SVG 1.1 line chart: one polyline per series in a fixed 10-color
// palette, y axis spanning [0, 1.05 * max].
std::string render_svg_lines(const PlotSpec& spec);
void emit_svg_lines(const PlotSpec& spec, const std::filesystem::path& path);

// Writes `text` to `path` (parent directories created).
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace posbias
