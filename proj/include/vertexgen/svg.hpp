#pragma once

#include <string>
#include <vector>

#include "vertexgen/common.hpp"

namespace vgen {

// Byte-stable SVG emitters: fixed-precision coordinates, no timestamps, no
// external references, deterministic iteration order.

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

std::string line_plot_svg(const std::vector<Series>& series, const std::string& title,
                          const std::string& x_label, const std::string& y_label);

// Row-major h*w grid rendered as shaded cells (dark = low, warm = high).
std::string heat_map_svg(const std::vector<double>& grid, int h, int w,
                         const std::string& title, const std::string& note = "");

// Scene rendering: filled base polygons (palette-colored) plus stroked
// overlay chains, with (i, j) scene units mapped to (y, x) pixels.
struct OverlayChain {
  std::vector<Vec2> points;
  std::string color;   // any CSS color
  double opacity = 1.0;
  bool closed = true;
};

std::string scene_svg(const std::vector<std::vector<Vec2>>& polygons,
                      const std::vector<int>& color_ids,
                      const std::vector<OverlayChain>& overlays, const std::string& title);

// Fixed fill palette shared with the synthetic scenes (8 entries).
const std::vector<std::string>& svg_palette();

}  // namespace vgen
