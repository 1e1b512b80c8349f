#include "svg_plot.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace causaltraj::tools {

namespace {

struct Frame {
  double x0, y0, scale, height;
  std::pair<double, double> map(double x, double y) const { return {(x - x0) * scale, height - (y - y0) * scale}; }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string path(const Frame& f, const std::vector<Eigen::RowVector2d>& pts) {
  std::string d;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto [x, y] = f.map(pts[i].x(), pts[i].y());
    d += (i == 0 ? "M" : " L") + fmt(x) + " " + fmt(y);
  }
  return d;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

}  // namespace

std::string render_scene_svg(const Scene& s, const std::vector<PlotLayer>& layers, int width, int height) {
  // Fit everything that is drawn, with a margin.
  double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
  auto grow = [&](double x, double y) {
    lo_x = std::min(lo_x, x), hi_x = std::max(hi_x, x);
    lo_y = std::min(lo_y, y), hi_y = std::max(hi_y, y);
  };
  const Matrix& pts = s.target.trajectory.points;
  for (Index t = 0; t < pts.rows(); ++t)
    if (s.target.trajectory.valid[static_cast<std::size_t>(t)]) grow(pts(t, 0), pts(t, 1));
  for (const auto& l : layers)
    for (int k = 0; k < l.prediction.maneuvers(); ++k) {
      const Matrix m = l.prediction.means(k);
      for (Index t = 0; t < m.rows(); ++t) grow(m(t, 0), m(t, 1));
    }
  lo_x -= 10, hi_x += 10, lo_y -= 8, hi_y += 8;
  const double scale = std::min(width / (hi_x - lo_x), height / (hi_y - lo_y));
  const Frame f{lo_x, lo_y, scale, static_cast<double>(height)};

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  for (const auto& poly : s.map) {
    std::vector<Eigen::RowVector2d> p;
    for (Index k = 0; k < poly.points.rows(); ++k) p.emplace_back(poly.points(k, 0), poly.points(k, 1));
    const int type = poly.points.cols() > 2 ? static_cast<int>(poly.points(0, 2)) : 1;
    const char* color = type == static_cast<int>(RoadType::Crosswalk) ? "#d9a400"
                        : type == static_cast<int>(RoadType::RoadEdge) ? "#555555"
                                                                        : "#bbbbbb";
    svg << "<path d=\"" << path(f, p) << "\" stroke=\"" << color << "\" stroke-width=\"2\" fill=\"none\"/>\n";
  }
  for (const auto& n : s.neighbors) {
    const Index h = n.history_length - 1;
    if (!n.trajectory.valid[static_cast<std::size_t>(h)]) continue;
    const auto [x, y] = f.map(n.trajectory.points(h, 0), n.trajectory.points(h, 1));
    svg << "<circle cx=\"" << fmt(x) << "\" cy=\"" << fmt(y) << "\" r=\"4\" fill=\"#7a4fbf\"/>\n";
  }
  std::vector<Eigen::RowVector2d> hist, fut;
  for (Index t = 0; t < s.target.history_length; ++t)
    if (s.target.trajectory.valid[static_cast<std::size_t>(t)]) hist.emplace_back(pts.row(t));
  fut.emplace_back(pts.row(s.target.history_length - 1));
  for (Index t = s.target.history_length; t < pts.rows(); ++t) fut.emplace_back(pts.row(t));
  svg << "<path d=\"" << path(f, hist) << "\" stroke=\"#222222\" stroke-width=\"3\" fill=\"none\"/>\n";
  svg << "<path d=\"" << path(f, fut) << "\" stroke=\"#2a9d3a\" stroke-width=\"3\" stroke-dasharray=\"6 3\" fill=\"none\"/>\n";

  int legend = 0;
  for (const auto& l : layers) {
    const Eigen::VectorXd p = l.prediction.probabilities();
    for (int k = 0; k < l.prediction.maneuvers(); ++k) {
      const Matrix m = l.prediction.means(k);
      std::vector<Eigen::RowVector2d> line{pts.row(s.target.history_length - 1)};
      for (Index t = 0; t < m.rows(); ++t) line.emplace_back(m(t, 0), m(t, 1));
      svg << "<path d=\"" << path(f, line) << "\" stroke=\"" << l.color << "\" stroke-opacity=\""
          << fmt(0.15 + 0.85 * p(k)) << "\" stroke-width=\"2\" fill=\"none\"/>\n";
    }
    svg << "<text x=\"10\" y=\"" << 18 + 16 * legend++ << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\""
        << l.color << "\">" << escape(l.label) << "</text>\n";
  }
  svg << "<text x=\"10\" y=\"" << height - 10 << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#222222\">"
      << escape(s.id) << " (history black, future green dashed)</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace causaltraj::tools
