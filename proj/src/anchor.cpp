#include "vertexgen/anchor.hpp"

#include <algorithm>
#include <cmath>

namespace vgen {

namespace {

constexpr double kProbClamp = 1e-6;

// IoU between [0,h]x[0,w] and the same box with its left-top corner displaced
// by (a, b). The displaced box is [a,h]x[b,w]; it degenerates when a >= h or
// b >= w.
double displaced_iou(double h, double w, double a, double b) {
  if (a >= h || b >= w) return 0.0;
  double ih = h - std::max(0.0, a);
  double iw = w - std::max(0.0, b);
  if (ih <= 0.0 || iw <= 0.0) return 0.0;
  double inter = ih * iw;
  double area2 = (h - a) * (w - b);
  double uni = h * w + area2 - inter;
  return inter / uni;
}

double worst_iou_at(double h, double w, double r, int n_dirs) {
  double worst = 1.0;
  for (int k = 0; k < n_dirs; ++k) {
    double th = 2.0 * kPi * k / n_dirs;
    worst = std::min(worst, displaced_iou(h, w, r * std::cos(th), r * std::sin(th)));
  }
  return worst;
}

}  // namespace

double corner_displacement_radius(double box_h, double box_w, double min_iou) {
  if (!(box_h > 0.0) || !(box_w > 0.0))
    throw std::invalid_argument("corner_displacement_radius needs positive box extent");
  if (!(min_iou > 0.0) || !(min_iou < 1.0))
    throw std::invalid_argument("corner_displacement_radius needs 0 < min_iou < 1");
  const int n_dirs = 720;
  double lo = 0.0, hi = std::hypot(box_h, box_w);
  for (int it = 0; it < 60; ++it) {
    double mid = 0.5 * (lo + hi);
    if (worst_iou_at(box_h, box_w, mid, n_dirs) >= min_iou)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

Heatmap gaussian_target(Vec2 center_cells, Vec2 box_cells, int h, int w) {
  if (h < 1 || w < 1) throw std::invalid_argument("gaussian_target grid must be positive");
  if (center_cells.i < 0.0 || center_cells.i >= h || center_cells.j < 0.0 ||
      center_cells.j >= w)
    throw std::invalid_argument("gaussian_target center outside the grid");
  if (!(box_cells.i > 0.0) || !(box_cells.j > 0.0))
    throw std::invalid_argument("gaussian_target box extent must be positive");

  double r = corner_displacement_radius(box_cells.i, box_cells.j);
  double sigma = std::max(1.0, r / 3.0);
  int ic = int(center_cells.i), jc = int(center_cells.j);

  Heatmap y;
  y.h = h;
  y.w = w;
  y.v.resize(size_t(h) * w);
  double inv = 1.0 / (2.0 * sigma * sigma);
  for (int rr = 0; rr < h; ++rr)
    for (int cc = 0; cc < w; ++cc) {
      double d2 = double(rr - ic) * (rr - ic) + double(cc - jc) * (cc - jc);
      y.at(rr, cc) = std::exp(-d2 * inv);
    }
  return y;
}

double focal_loss(const Heatmap& pred, const Heatmap& target) {
  if (pred.h != target.h || pred.w != target.w)
    throw std::invalid_argument("focal_loss resolution mismatch");
  double acc = 0.0;
  for (size_t k = 0; k < pred.v.size(); ++k) {
    double y = std::clamp(pred.v[k], kProbClamp, 1.0 - kProbClamp);
    double t = target.v[k];
    if (t == 1.0) {
      acc += -std::pow(1.0 - y, kFocalAlpha) * std::log(y);
    } else {
      acc += -std::pow(1.0 - t, kFocalBeta) * std::pow(y, kFocalAlpha) * std::log(1.0 - y);
    }
  }
  return acc / double(pred.v.size());
}

CenterAnchor extract_peak(const Heatmap& pred) {
  if (pred.v.empty()) throw std::invalid_argument("extract_peak on empty heatmap");
  size_t best = 0;
  for (size_t k = 1; k < pred.v.size(); ++k)
    if (pred.v[k] > pred.v[best]) best = k;
  int r = int(best / pred.w), c = int(best % pred.w);
  return CenterAnchor{{r + 0.5, c + 0.5}, double(pred.h), double(pred.w)};
}

Vec2 normalize_point(Vec2 p, const CenterAnchor& anchor) {
  if (!(anchor.h > 0.0) || !(anchor.w > 0.0))
    throw std::invalid_argument("anchor extent must be positive");
  double oi = (p.i - anchor.center.i) / anchor.h;
  double oj = (p.j - anchor.center.j) / anchor.w;
  return {(oi + 1.0) / 2.0, (oj + 1.0) / 2.0};
}

Vec2 denormalize_point(Vec2 stored, const CenterAnchor& anchor) {
  if (!(anchor.h > 0.0) || !(anchor.w > 0.0))
    throw std::invalid_argument("anchor extent must be positive");
  double oi = 2.0 * stored.i - 1.0;
  double oj = 2.0 * stored.j - 1.0;
  return {anchor.center.i + oi * anchor.h, anchor.center.j + oj * anchor.w};
}

}  // namespace vgen
