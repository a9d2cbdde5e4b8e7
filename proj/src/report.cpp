#include "posbias/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace posbias {

namespace {

constexpr std::array<const char*, 10> kPalette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                                  "#bcbd22", "#17becf"};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("short write on '" + path.string() + "'");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string render_curves_csv(const std::vector<BiasCurve>& curves) {
  std::string out = "segment,position,accuracy,cv\n";
  for (const auto& c : curves)
    for (std::size_t j = 0; j < c.accuracies.size(); ++j)
      out += std::to_string(c.segment_index) + "," + std::to_string(j) + "," +
             fmt("%.6f", c.accuracies[j]) + "," + fmt("%.6f", c.cv) + "\n";
  return out;
}

void emit_curves_csv(const std::vector<BiasCurve>& curves, const std::filesystem::path& path) {
  if (curves.empty()) throw ValidationError("no curves to write");
  write_text_file(path, render_curves_csv(curves));
}

std::vector<BiasCurve> parse_curves_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "segment,position,accuracy,cv")
    throw ValidationError("curves CSV: unexpected header");
  std::map<int, BiasCurve> by_segment;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    int k = 0, j = 0;
    double acc = 0.0, cv = 0.0;
    if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf", &k, &j, &acc, &cv) != 4)
      throw ValidationError("curves CSV: malformed line " + std::to_string(line_no));
    auto& c = by_segment[k];
    c.segment_index = k;
    if (j != static_cast<int>(c.accuracies.size()))
      throw ValidationError("curves CSV: positions out of order at line " + std::to_string(line_no));
    c.accuracies.push_back(acc);
    c.cv = cv;
  }
  std::vector<BiasCurve> out;
  for (auto& [k, c] : by_segment) {
    c.beginning_biased = !c.accuracies.empty() &&
                         c.accuracies.front() >= *std::max_element(c.accuracies.begin(), c.accuracies.end());
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<BiasCurve> read_curves_csv(const std::filesystem::path& path) {
  return parse_curves_csv(read_text_file(path));
}

std::string render_importance_csv(const ImportanceCurve& curve) {
  std::string out = "series,index,x,accuracy\n";
  const double n = static_cast<double>(curve.per_segment.size());
  for (std::size_t k = 0; k < curve.per_segment.size(); ++k)
    out += "segment," + std::to_string(k) + "," + fmt("%.6f", (k + 0.5) / n) + "," +
           fmt("%.6f", curve.per_segment[k]) + "\n";
  const auto m = curve.interpolated.size();
  for (std::size_t i = 0; i < m; ++i)
    out += "interpolated," + std::to_string(i) + "," +
           fmt("%.6f", m > 1 ? static_cast<double>(i) / (m - 1) : 0.0) + "," +
           fmt("%.6f", curve.interpolated[i]) + "\n";
  return out;
}

void emit_importance_csv(const ImportanceCurve& curve, const std::filesystem::path& path) {
  if (curve.per_segment.empty()) throw ValidationError("empty importance curve");
  write_text_file(path, render_importance_csv(curve));
}

PlotSpec bias_plot(const std::vector<BiasCurve>& curves, std::string title) {
  PlotSpec spec;
  spec.title = std::move(title);
  for (const auto& c : curves) {
    PlotSeries s;
    s.label = "segment " + std::to_string(c.segment_index);
    for (std::size_t j = 0; j < c.accuracies.size(); ++j) {
      s.xs.push_back(static_cast<double>(j));
      s.ys.push_back(c.accuracies[j]);
    }
    spec.series.push_back(std::move(s));
  }
  return spec;
}

PlotSpec importance_plot(const ImportanceCurve& curve, std::string title) {
  PlotSpec spec;
  spec.title = std::move(title);
  spec.integer_x_ticks = false;
  PlotSeries interp{"interpolated", {}, {}};
  const auto m = curve.interpolated.size();
  for (std::size_t i = 0; i < m; ++i) {
    interp.xs.push_back(m > 1 ? static_cast<double>(i) / (m - 1) : 0.0);
    interp.ys.push_back(curve.interpolated[i]);
  }
  PlotSeries anchors{"segments", {}, {}};
  const double n = static_cast<double>(curve.per_segment.size());
  for (std::size_t k = 0; k < curve.per_segment.size(); ++k) {
    anchors.xs.push_back((k + 0.5) / n);
    anchors.ys.push_back(curve.per_segment[k]);
  }
  spec.series.push_back(std::move(interp));
  spec.series.push_back(std::move(anchors));
  return spec;
}

std::string render_svg_lines(const PlotSpec& spec) {
  if (spec.series.empty()) throw ValidationError("plot needs at least one series");
  constexpr double W = 640, H = 420, left = 64, right = 130, top = 40, bottom = 56;
  const double pw = W - left - right;
  const double ph = H - top - bottom;

  double xmin = INFINITY, xmax = -INFINITY, ymax = 0.0;
  for (const auto& s : spec.series) {
    if (s.xs.size() != s.ys.size() || s.xs.empty())
      throw ValidationError("plot series '" + s.label + "' is empty or ragged");
    for (double x : s.xs) xmin = std::min(xmin, x), xmax = std::max(xmax, x);
    for (double y : s.ys) ymax = std::max(ymax, y);
  }
  if (xmax <= xmin) xmax = xmin + 1.0;
  const double ytop = ymax > 0.0 ? ymax * 1.05 : 1.0;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + ph - y / ytop * ph; };

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << W << "\" height=\"" << H
    << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
    << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"#ffffff\"/>\n";
  if (!spec.title.empty())
    o << "<text x=\"" << fmt("%.2f", left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"14\">" << xml_escape(spec.title) << "</text>\n";

  // axes
  o << "<g stroke=\"#333333\" stroke-width=\"1\" fill=\"none\">\n"
    << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\""
    << top + ph << "\"/>\n"
    << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
    << "\"/>\n</g>\n";

  o << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double y = ytop * i / 5.0;
    o << "<text x=\"" << left - 6 << "\" y=\"" << fmt("%.2f", py(y) + 4) << "\" text-anchor=\"end\">"
      << fmt("%.2f", y) << "</text>\n";
  }
  if (spec.integer_x_ticks) {
    for (double x = std::ceil(xmin); x <= xmax; x += 1.0)
      o << "<text x=\"" << fmt("%.2f", px(x)) << "\" y=\"" << top + ph + 16
        << "\" text-anchor=\"middle\">" << fmt("%.0f", x) << "</text>\n";
  } else {
    for (int i = 0; i <= 4; ++i) {
      const double x = xmin + (xmax - xmin) * i / 4.0;
      o << "<text x=\"" << fmt("%.2f", px(x)) << "\" y=\"" << top + ph + 16
        << "\" text-anchor=\"middle\">" << fmt("%.2f", x) << "</text>\n";
    }
  }
  o << "<text x=\"" << fmt("%.2f", left + pw / 2) << "\" y=\"" << H - 14
    << "\" text-anchor=\"middle\" font-size=\"12\">" << xml_escape(spec.x_label) << "</text>\n"
    << "<text x=\"16\" y=\"" << fmt("%.2f", top + ph / 2) << "\" text-anchor=\"middle\" font-size=\"12\" "
    << "transform=\"rotate(-90 16 " << fmt("%.2f", top + ph / 2) << ")\">" << xml_escape(spec.y_label)
    << "</text>\n</g>\n";

  for (std::size_t i = 0; i < spec.series.size(); ++i) {
    const auto& s = spec.series[i];
    const char* color = kPalette[i % kPalette.size()];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t p = 0; p < s.xs.size(); ++p) {
      if (p) o << ' ';
      o << fmt("%.2f", px(s.xs[p])) << ',' << fmt("%.2f", py(s.ys[p]));
    }
    o << "\"/>\n";
    const double ly = top + 8 + 18.0 * static_cast<double>(i);
    o << "<g class=\"legend\"><line x1=\"" << left + pw + 12 << "\" y1=\"" << fmt("%.2f", ly)
      << "\" x2=\"" << left + pw + 32 << "\" y2=\"" << fmt("%.2f", ly) << "\" stroke=\"" << color
      << "\" stroke-width=\"2\"/><text x=\"" << left + pw + 38 << "\" y=\"" << fmt("%.2f", ly + 4)
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(s.label) << "</text></g>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void emit_svg_lines(const PlotSpec& spec, const std::filesystem::path& path) {
  write_text_file(path, render_svg_lines(spec));
}

}  // namespace posbias
