#pragma once

#include <vector>

#include "vertexgen/common.hpp"

namespace vgen {

struct Heatmap {
  int h = 0, w = 0;
  std::vector<double> v;  // row-major
  double at(int r, int c) const { return v[size_t(r) * w + c]; }
  double& at(int r, int c) { return v[size_t(r) * w + c]; }
};

// Center anchor: a reference point plus the normalization extent. center is
// in cell units of the heatmap grid; (h, w) is that grid's size, so
// normalized offsets divide by the full grid extent.
struct CenterAnchor {
  Vec2 center;
  double h = 0, w = 0;
};

// Largest radius r such that displacing one box corner by r (worst direction)
// still keeps IoU with the original box >= min_iou. Solved numerically.
double corner_displacement_radius(double box_h, double box_w, double min_iou = 0.7);

// Gaussian peak target: exp(-d^2 / (2 sigma^2)) around the integer cell that
// contains `center_cells`, with sigma = max(1, r/3) from the IoU-0.7 radius
// of `box_cells`. The peak cell is exactly 1.
Heatmap gaussian_target(Vec2 center_cells, Vec2 box_cells, int h, int w);

// Penalty-reduced pixelwise focal loss, mean over cells, alpha = 2, beta = 4.
// Predictions are clamped to [1e-6, 1 - 1e-6].
double focal_loss(const Heatmap& pred, const Heatmap& target);
inline constexpr double kFocalAlpha = 2.0;
inline constexpr double kFocalBeta = 4.0;

// Argmax cell (row-major tie-break) as an anchor whose center is the cell
// center and whose extent is the heatmap size.
CenterAnchor extract_peak(const Heatmap& pred);

// p (cell units) -> offsets from the anchor normalized by grid extent,
// then shifted from [-1, 1]-ish into stored [0, 1] form: (o + 1) / 2.
Vec2 normalize_point(Vec2 p, const CenterAnchor& anchor);
Vec2 denormalize_point(Vec2 stored, const CenterAnchor& anchor);

inline constexpr int kDefaultHeatmapRes = 64;

}  // namespace vgen
