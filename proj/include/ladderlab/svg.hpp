#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "ladderlab/dynamics.hpp"

namespace ladderlab {

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

/// SVG 1.1 plot of the (x1, x2) curve (or (x, p) for a 1D trajectory): one polyline in an
/// 800x800 viewbox with a 5% margin, axes through the origin when it is in view, and the
/// annotation lines as text.
inline void write_trajectory_svg(std::ostream& os, const Trajectory& traj, const std::vector<std::string>& annotation) {
  constexpr double size = 800.0, margin = 0.05 * size, inner = size - 2.0 * margin;
  std::vector<std::pair<double, double>> pts;
  pts.reserve(traj.states.size());
  for (const PhaseState& s : traj.states) pts.emplace_back(s.x(0), traj.dim == 2 ? s.x(1) : s.p(0));
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (const auto& [a, b] : pts) {
    xlo = std::min(xlo, a);
    xhi = std::max(xhi, a);
    ylo = std::min(ylo, b);
    yhi = std::max(yhi, b);
  }
  if (pts.empty()) xlo = xhi = ylo = yhi = 0.0;
  if (!(xhi > xlo)) {
    xlo -= 1.0;
    xhi += 1.0;
  }
  if (!(yhi > ylo)) {
    ylo -= 1.0;
    yhi += 1.0;
  }
  auto px = [&](double a) { return margin + (a - xlo) / (xhi - xlo) * inner; };
  auto py = [&](double b) { return size - margin - (b - ylo) / (yhi - ylo) * inner; };

  char buf[256];
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n"
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"800\" height=\"800\" "
        "viewBox=\"0 0 800 800\">\n"
        "<rect x=\"0\" y=\"0\" width=\"800\" height=\"800\" fill=\"white\"/>\n";
  const char* axis_style = "stroke=\"#888888\" stroke-width=\"1\"";
  if (xlo <= 0.0 && xhi >= 0.0) {
    std::snprintf(buf, sizeof buf, "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" %s/>\n", px(0.0), margin,
                  px(0.0), size - margin, axis_style);
    os << buf;
  }
  if (ylo <= 0.0 && yhi >= 0.0) {
    std::snprintf(buf, sizeof buf, "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" %s/>\n", margin, py(0.0),
                  size - margin, py(0.0), axis_style);
    os << buf;
  }
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"none\" %s/>\n", margin, margin,
                inner, inner, axis_style);
  os << buf;
  os << "<polyline fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"1.2\" points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", px(pts[i].first), py(pts[i].second));
    os << buf;
  }
  os << "\"/>\n";
  const char* xname = "x1";
  const char* yname = traj.dim == 2 ? "x2" : "p1";
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.2f\" y=\"%.2f\" font-family=\"sans-serif\" font-size=\"12\">%s in [%.4g, %.4g]</text>\n",
                margin, size - 0.3 * margin, xname, xlo, xhi);
  os << buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.2f\" y=\"%.2f\" font-family=\"sans-serif\" font-size=\"12\">%s in [%.4g, %.4g]</text>\n",
                0.55 * size, size - 0.3 * margin, yname, ylo, yhi);
  os << buf;
  for (std::size_t i = 0; i < annotation.size(); ++i) {
    std::snprintf(buf, sizeof buf, "<text x=\"%.2f\" y=\"%.2f\" font-family=\"sans-serif\" font-size=\"12\">", margin,
                  0.45 * margin + 14.0 * static_cast<double>(i));
    os << buf << detail::xml_escape(annotation[i]) << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace ladderlab
