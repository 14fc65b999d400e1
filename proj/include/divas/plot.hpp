#pragma once

// Minimal SVG emitters for the diagnostic panels: angle dot plots with bound
// lines, concentration strips, and Q-Q curves. Data-first output; these are
// convenience renderings of the report, not a plotting library.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "divas/diagnostics.hpp"

namespace divas {
namespace svg {

class Canvas {
 public:
  Canvas(double width, double height) : width_(width), height_(height) {
    body_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
          << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    body_ << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& color,
            double w = 1.0, const std::string& dash = "") {
    body_ << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2 << "\" y2=\"" << y2
          << "\" stroke=\"" << color << "\" stroke-width=\"" << w << "\"";
    if (!dash.empty()) body_ << " stroke-dasharray=\"" << dash << "\"";
    body_ << "/>\n";
  }
  void circle(double x, double y, double r, const std::string& color, bool filled = true) {
    body_ << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"" << r << "\" "
          << (filled ? "fill=\"" + color + "\"" : "fill=\"none\" stroke=\"" + color + "\"") << "/>\n";
  }
  void cross(double x, double y, double r, const std::string& color) {
    line(x - r, y - r, x + r, y + r, color, 1.5);
    line(x - r, y + r, x + r, y - r, color, 1.5);
  }
  void rect(double x, double y, double w, double h, const std::string& fill,
            const std::string& stroke = "none") {
    body_ << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << h
          << "\" fill=\"" << fill << "\" stroke=\"" << stroke << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, double size = 11.0,
            const std::string& anchor = "start") {
    body_ << "<text x=\"" << x << "\" y=\"" << y << "\" font-size=\"" << size
          << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\">" << s << "</text>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                double w = 0.6) {
    body_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << w
          << "\" points=\"";
    for (const auto& [x, y] : pts) body_ << x << "," << y << " ";
    body_ << "\"/>\n";
  }
  void save(const std::string& path) {
    std::ofstream out(path);
    out << body_.str() << "</svg>\n";
  }

 private:
  double width_, height_;
  std::ostringstream body_;
};

}  // namespace svg

/// One panel grid per space: block rows x collection columns, every
/// direction shown as a cross (angle) and a dot (upper bound), with the
/// perturbation bound dashed and the random-direction bound dash-dotted.
inline void write_angle_panel_svg(const std::string& path, const DiagnosticsReport& report,
                                  bool object_space) {
  std::vector<BlockCollection> collections;
  for (const auto& [c, r] : report.collection_ranks) collections.push_back(c);
  const std::size_t k_total = report.blocks.size();
  const double cell_w = 120, cell_h = 90, margin = 70, header = 40;
  svg::Canvas canvas(margin + cell_w * std::max<std::size_t>(collections.size(), 1) + 20,
                     header + cell_h * k_total + 30);
  const auto y_of = [&](std::size_t row, double angle) {
    return header + cell_h * (row + 1) - (angle / 90.0) * (cell_h - 14) - 6;
  };

  for (std::size_t ci = 0; ci < collections.size(); ++ci)
    canvas.text(margin + cell_w * ci + cell_w / 2, header - 10,
                to_string(collections[ci]) + " r=" + std::to_string(report.collection_ranks.at(collections[ci])),
                11, "middle");

  for (std::size_t row = 0; row < k_total; ++row) {
    const auto& b = report.blocks[row];
    canvas.text(8, header + cell_h * row + cell_h / 2, b.name, 11);
    for (std::size_t ci = 0; ci < collections.size(); ++ci) {
      const double x0 = margin + cell_w * ci, y0 = header + cell_h * row;
      const bool included = collections[ci].contains(static_cast<int>(row) + 1);
      canvas.rect(x0, y0, cell_w - 8, cell_h - 8, included ? "#eef4ff" : "white", "#999");
      if (b.signal_free) continue;
      if (object_space && !included) continue;
      const double bound = object_space ? b.psi_hat : b.phi_hat;
      const double theta0 = object_space ? b.theta0_object : b.theta0_trait;
      canvas.line(x0, y_of(row, bound), x0 + cell_w - 8, y_of(row, bound), "#2a7", 1.0, "5,3");
      canvas.line(x0, y_of(row, theta0), x0 + cell_w - 8, y_of(row, theta0), "#555", 1.0, "7,2,1,2");
      int shown = 0;
      for (const auto& d : report.directions) {
        if (!(d.collection == collections[ci])) continue;
        const double x = x0 + 16 + 18.0 * shown;
        if (object_space) {
          for (const auto& o : d.object)
            if (o.block == static_cast<int>(row) + 1) {
              canvas.cross(x, y_of(row, o.angle), 3.5, "#c22");
              canvas.circle(x, y_of(row, o.upper_bound), 3.0, "#22c");
              ++shown;
            }
        } else {
          for (const auto& t : d.trait)
            if (t.block == static_cast<int>(row) + 1) {
              canvas.cross(x, y_of(row, t.angle), 3.5, "#c22");
              canvas.circle(x, y_of(row, t.upper_bound), 3.0, "#22c");
              ++shown;
            }
        }
      }
    }
  }
  canvas.text(8, header + cell_h * k_total + 18,
              object_space ? "object-space angles: x angle, o upper bound, dashed bound, dash-dot arbitrary"
                           : "trait-space angles: x angle, o upper bound, dashed bound, dash-dot arbitrary",
              10);
  canvas.save(path);
}

/// Concentration strips: one column per collection, markers per direction.
inline void write_concentration_svg(const std::string& path, const DiagnosticsReport& report) {
  std::vector<BlockCollection> collections;
  for (const auto& [c, r] : report.collection_ranks) collections.push_back(c);
  const double cell_w = 120, cell_h = 110, margin = 70;
  svg::Canvas canvas(margin + cell_w * std::max<std::size_t>(collections.size(), 1) + 20,
                     40 + 2 * cell_h + 30);
  double max_objects = 1.0;
  for (const auto& b : report.blocks) max_objects = std::max(max_objects, static_cast<double>(b.objects));

  canvas.text(8, 40 + cell_h / 2, "ENC", 11);
  canvas.text(8, 40 + cell_h + cell_h / 2, "ECT %", 11);
  for (std::size_t ci = 0; ci < collections.size(); ++ci) {
    const double x0 = margin + cell_w * ci;
    canvas.text(x0 + cell_w / 2, 28, to_string(collections[ci]), 11, "middle");
    canvas.rect(x0, 40, cell_w - 8, cell_h - 8, "white", "#999");
    canvas.rect(x0, 40 + cell_h, cell_w - 8, cell_h - 8, "white", "#999");
    int shown = 0;
    for (const auto& d : report.directions) {
      if (!(d.collection == collections[ci])) continue;
      const double x = x0 + 16 + 18.0 * shown;
      // log scale from 1 to n
      const double frac = std::log(std::max(d.enc_value, 1.0)) / std::log(max_objects);
      canvas.cross(x, 40 + cell_h - 12 - frac * (cell_h - 24), 3.5, "#363");
      for (const auto& o : d.object) {
        const double y = 40 + cell_h + cell_h - 12 - o.ect_value * (cell_h - 24);
        canvas.text(x, y, std::to_string(o.block), 10, "middle");
      }
      ++shown;
    }
  }
  canvas.save(path);
}

/// Q-Q curve for one block: envelope band, theoretical diagonal, observed points.
inline void write_qq_svg(const std::string& path, const QQBlockData& qq) {
  const double size = 360, margin = 45;
  svg::Canvas canvas(size + margin * 2, size + margin * 2);
  if (qq.observed.size() == 0) {
    canvas.text(margin, margin, qq.name + ": no spectrum", 12);
    canvas.save(path);
    return;
  }
  double lo = qq.theoretical.minCoeff(), hi = qq.theoretical.maxCoeff();
  lo = std::min(lo, qq.observed.minCoeff());
  hi = std::max(hi, qq.observed.maxCoeff());
  if (qq.env_min.size() > 0) {
    lo = std::min(lo, qq.env_min.minCoeff());
    hi = std::max(hi, qq.env_max.maxCoeff());
  }
  const double span = std::max(hi - lo, 1e-12);
  const auto px = [&](double v) { return margin + (v - lo) / span * size; };
  const auto py = [&](double v) { return margin + size - (v - lo) / span * size; };

  if (qq.env_min.size() == qq.theoretical.size()) {
    std::vector<std::pair<double, double>> lo_pts, hi_pts;
    for (Index i = 0; i < qq.theoretical.size(); ++i) {
      lo_pts.push_back({px(qq.env_min(i)), py(qq.theoretical(i))});
      hi_pts.push_back({px(qq.env_max(i)), py(qq.theoretical(i))});
    }
    canvas.polyline(lo_pts, "#3a3");
    canvas.polyline(hi_pts, "#3a3");
  }
  canvas.line(px(lo), py(lo), px(hi), py(hi), "#999", 0.8, "4,3");
  for (Index i = 0; i < qq.observed.size(); ++i)
    canvas.circle(px(qq.observed(i)), py(qq.theoretical(i)), 1.6, "#c2c");
  canvas.text(margin, 20, qq.name + ": residual spectrum against the bulk law", 12);
  canvas.text(margin + size / 2, margin + size + 28, "observed", 11, "middle");
  canvas.save(path);
}

}  // namespace divas
