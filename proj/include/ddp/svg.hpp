#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <string>
#include <vector>

#include "ddp/environment.hpp"

namespace ddp {

namespace detail {

inline std::string fnum(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

/// Maps one world axis pair onto panel pixels, y axis pointing up.
struct PanelMap {
  double x0, y0, size;  // pixel origin and edge of the square panel
  Eigen::Vector2d lo, hi;

  double px(double wx) const { return x0 + (wx - lo.x()) / (hi.x() - lo.x()) * size; }
  double py(double wy) const { return y0 + size - (wy - lo.y()) / (hi.y() - lo.y()) * size; }
};

inline void panel(std::string& out, const PanelMap& m, const World& world, int ax, int ay,
                  const std::vector<Eigen::MatrixXd>& paths, int highlight,
                  const std::string& label) {
  out += "<rect x='" + fnum(m.x0) + "' y='" + fnum(m.y0) + "' width='" + fnum(m.size) +
         "' height='" + fnum(m.size) + "' fill='#fcfcf8' stroke='#44484c' stroke-width='1'/>\n";
  for (const Box& b : world.obstacles) {
    const double wx0 = b.center[ax] - b.half_extents[ax];
    const double wy1 = b.center[ay] + b.half_extents[ay];
    out += "<rect x='" + fnum(m.px(wx0)) + "' y='" + fnum(m.py(wy1)) + "' width='" +
           fnum(2.0 * b.half_extents[ax] / (m.hi.x() - m.lo.x()) * m.size) + "' height='" +
           fnum(2.0 * b.half_extents[ay] / (m.hi.y() - m.lo.y()) * m.size) +
           "' fill='#c8c4bc' stroke='#7a766e' stroke-width='1'/>\n";
  }
  for (std::size_t i = 0; i < paths.size(); ++i) {
    if (static_cast<int>(i) == highlight) continue;
    out += "<polyline fill='none' stroke='#7f93a8' stroke-width='1' stroke-opacity='0.6' points='";
    for (Eigen::Index t = 0; t < paths[i].rows(); ++t) {
      out += fnum(m.px(paths[i](t, ax))) + "," + fnum(m.py(paths[i](t, ay)));
      if (t + 1 < paths[i].rows()) out += " ";
    }
    out += "'/>\n";
  }
  if (highlight >= 0 && highlight < static_cast<int>(paths.size())) {
    const Eigen::MatrixXd& p = paths[static_cast<std::size_t>(highlight)];
    out += "<polyline fill='none' stroke='#c2401f' stroke-width='2' points='";
    for (Eigen::Index t = 0; t < p.rows(); ++t) {
      out += fnum(m.px(p(t, ax))) + "," + fnum(m.py(p(t, ay)));
      if (t + 1 < p.rows()) out += " ";
    }
    out += "'/>\n";
  }
  out += "<text x='" + fnum(m.x0 + 4) + "' y='" + fnum(m.y0 + 16) +
         "' font-family='monospace' font-size='13' fill='#44484c'>" + label + "</text>\n";
}

}  // namespace detail

/// Two orthographic projections (top xy, front xz) of paths in a world.
/// `highlight` draws one path emphasized, -1 for none. Output is a
/// standalone SVG document with deterministic formatting.
inline std::string render_paths_svg(const World& world, const std::vector<Eigen::MatrixXd>& paths,
                                    int highlight = -1) {
  const double panel_size = 400.0;
  const double margin = 24.0;
  const double width = 2 * panel_size + 3 * margin;
  const double height = panel_size + 2 * margin;
  std::string out;
  out += "<svg xmlns='http://www.w3.org/2000/svg' width='" + detail::fnum(width) +
         "' height='" + detail::fnum(height) + "' viewBox='0 0 " + detail::fnum(width) + " " +
         detail::fnum(height) + "'>\n";
  out += "<rect x='0' y='0' width='" + detail::fnum(width) + "' height='" +
         detail::fnum(height) + "' fill='#ffffff'/>\n";

  const Eigen::Vector3d lo = world.bounds.center - world.bounds.half_extents;
  const Eigen::Vector3d hi = world.bounds.center + world.bounds.half_extents;
  detail::PanelMap xy{margin, margin, panel_size, {lo.x(), lo.y()}, {hi.x(), hi.y()}};
  detail::panel(out, xy, world, 0, 1, paths, highlight, "top (x, y)");
  detail::PanelMap xz{2 * margin + panel_size, margin, panel_size, {lo.x(), lo.z()},
                      {hi.x(), hi.z()}};
  detail::panel(out, xz, world, 0, 2, paths, highlight, "front (x, z)");
  out += "</svg>\n";
  return out;
}

}  // namespace ddp
