#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "vertexgen/common.hpp"

namespace vgen {

// Simple polygon in scene coordinates. Stored counter-clockwise (positive
// shoelace area with (i, j) read as (x, y)); at least 3 vertices; consecutive
// vertices are distinct (> 1e-9 apart, including the closing edge).
class Polygon {
 public:
  static Polygon make(std::vector<Vec2> pts);
  const std::vector<Vec2>& pts() const { return pts_; }
  size_t size() const { return pts_.size(); }

 private:
  Polygon() = default;
  std::vector<Vec2> pts_;
};

struct Box {
  Vec2 lt;  // (min i, min j)
  Vec2 rb;  // (max i, max j)
  static Box make(Vec2 lt, Vec2 rb);  // rejects zero/negative extent
};

struct BinaryMask {
  int h = 0, w = 0;
  std::vector<uint8_t> v;  // row-major, 0/1
  uint8_t at(int r, int c) const { return v[size_t(r) * w + c]; }
};

// Dense grid of angle sums (degrees), one value per cell center.
struct AngleMap {
  int h = 0, w = 0;
  std::vector<double> v;
  double at(int r, int c) const { return v[size_t(r) * w + c]; }
};

double shoelace_area(std::span<const Vec2> pts);  // signed
double perimeter(std::span<const Vec2> pts);

// n points at uniform arc-length spacing along the contour, starting at the
// vertex with the smallest i (ties: smallest j), traversed counter-clockwise.
// The first emitted point is that start vertex itself.
Polygon sample_contour_vertices(const Polygon& poly, int n);
inline constexpr int kDefaultContourPoints = 36;

// Sum of unsigned angles subtended at `p` by each polygon edge, in degrees.
// Each angle uses atan2(|cross|, dot) of the edge-endpoint direction vectors;
// direction vectors shorter than 1e-6 are scaled up to that length (exact
// coincidence falls back to a fixed unit direction). Result is clamped to
// (1e-9, 360]. The raw-span overload accepts any >= 1 point list and never
// throws, so it can be evaluated on unconstrained predicted vertices.
double angle_sum_deg(Vec2 p, std::span<const Vec2> poly);
double angle_sum_deg(Vec2 p, const Polygon& poly);

// Sum of signed subtended angles (the winding angle) at `p`, in degrees:
// +-360 for points enclosed by a simple polygon, ~0 outside. Unlike the
// unsigned sum above — whose total variation can exceed 360 outside concave
// polygons — this separates inside from outside cleanly, so it is the
// point-in-polygon classifier.
double winding_sum_deg(Vec2 p, std::span<const Vec2> poly);
double winding_sum_deg(Vec2 p, const Polygon& poly);
inline bool inside_by_angle(Vec2 p, std::span<const Vec2> poly) {
  return std::fabs(winding_sum_deg(p, poly)) > 180.0;
}
inline bool inside_by_angle(Vec2 p, const Polygon& poly) {
  return std::fabs(winding_sum_deg(p, poly)) > 180.0;
}

// angle_sum_deg evaluated at every cell center ((r+0.5)/h, (c+0.5)/w).
AngleMap angle_map(std::span<const Vec2> poly, int h, int w);
AngleMap angle_map(const Polygon& poly, int h, int w);
AngleMap angle_map_serial(std::span<const Vec2> poly, int h, int w);  // reference twin
inline constexpr int kDefaultAngleGrid = 64;

// Scanline even-odd fill; a cell is 1 iff its center is inside.
BinaryMask rasterize(const Polygon& poly, int h, int w);
// Same fill on a raw vertex list (used on model output, which may repeat or
// nearly repeat vertices); fewer than 3 distinct vertices -> empty mask.
BinaryMask rasterize_points(std::span<const Vec2> pts, int h, int w);
BinaryMask rasterize_points_serial(std::span<const Vec2> pts, int h, int w);

double mask_iou(const BinaryMask& a, const BinaryMask& b);  // both empty -> 1.0
double box_iou(const Box& a, const Box& b);

// 1 - 4*pi*A/P^2 in [0, 1): 0 for a circle, larger for jagged shapes.
double difficulty_degree(const Polygon& poly);
inline constexpr double kHardSampleThreshold = 0.2;

// Outer boundary of the single 4-connected foreground component, traced
// through boundary cell centers, collinear runs merged, returned CCW.
Polygon extract_contour(const BinaryMask& mask);

}  // namespace vgen
