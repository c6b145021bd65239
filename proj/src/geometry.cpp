#include "vertexgen/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "vertexgen/parallel.hpp"

namespace vgen {

namespace {

constexpr double kMinVertexSep = 1e-9;
constexpr double kMinAngleDeg = 1e-9;
constexpr double kDirClamp = 1e-6;

Vec2 clamped_dir(Vec2 p, Vec2 v) {
  Vec2 u = v - p;
  double n = norm(u);
  if (n >= kDirClamp) return u;
  if (n == 0.0) return {kDirClamp, 0.0};
  double s = kDirClamp / n;
  return {u.i * s, u.j * s};
}

double angle_sum_raw(Vec2 p, std::span<const Vec2> poly) {
  size_t n = poly.size();
  double total = 0.0;
  Vec2 u = clamped_dir(p, poly[0]);
  Vec2 first = u;
  for (size_t k = 0; k < n; ++k) {
    Vec2 w = (k + 1 < n) ? clamped_dir(p, poly[k + 1]) : first;
    total += std::atan2(std::fabs(cross(u, w)), dot(u, w));
    u = w;
  }
  return total * (180.0 / kPi);
}

}  // namespace

double shoelace_area(std::span<const Vec2> pts) {
  double a = 0.0;
  size_t n = pts.size();
  for (size_t k = 0; k < n; ++k) {
    const Vec2& p = pts[k];
    const Vec2& q = pts[(k + 1) % n];
    a += p.i * q.j - q.i * p.j;
  }
  return 0.5 * a;
}

double perimeter(std::span<const Vec2> pts) {
  double p = 0.0;
  size_t n = pts.size();
  for (size_t k = 0; k < n; ++k) p += norm(pts[(k + 1) % n] - pts[k]);
  return p;
}

Polygon Polygon::make(std::vector<Vec2> pts) {
  if (pts.size() < 3) throw std::invalid_argument("polygon needs at least 3 vertices");
  size_t n = pts.size();
  for (size_t k = 0; k < n; ++k) {
    if (norm(pts[(k + 1) % n] - pts[k]) <= kMinVertexSep)
      throw std::invalid_argument("polygon has consecutive duplicate vertices");
  }
  if (shoelace_area(pts) < 0.0) std::reverse(pts.begin(), pts.end());
  Polygon poly;
  poly.pts_ = std::move(pts);
  return poly;
}

Box Box::make(Vec2 lt, Vec2 rb) {
  if (!(lt.i < rb.i) || !(lt.j < rb.j))
    throw std::invalid_argument("box corners must satisfy lt < rb on both axes");
  return Box{lt, rb};
}

Polygon sample_contour_vertices(const Polygon& poly, int n) {
  if (n < 3) throw std::invalid_argument("contour sampling needs n >= 3");
  const auto& src = poly.pts();
  size_t m = src.size();

  size_t start = 0;
  for (size_t k = 1; k < m; ++k) {
    if (src[k].i < src[start].i || (src[k].i == src[start].i && src[k].j < src[start].j))
      start = k;
  }
  std::vector<Vec2> v(m);
  for (size_t k = 0; k < m; ++k) v[k] = src[(start + k) % m];

  std::vector<double> seg(m);
  double total = 0.0;
  for (size_t k = 0; k < m; ++k) {
    seg[k] = norm(v[(k + 1) % m] - v[k]);
    total += seg[k];
  }
  if (total <= 0.0) throw DegenerateGeometry("zero-perimeter contour");

  std::vector<Vec2> out;
  out.reserve(n);
  size_t edge = 0;
  double edge_start = 0.0;
  for (int k = 0; k < n; ++k) {
    double s = total * k / n;
    while (edge + 1 < m && s >= edge_start + seg[edge]) {
      edge_start += seg[edge];
      ++edge;
    }
    double t = seg[edge] > 0 ? (s - edge_start) / seg[edge] : 0.0;
    Vec2 a = v[edge], b = v[(edge + 1) % m];
    out.push_back({a.i + (b.i - a.i) * t, a.j + (b.j - a.j) * t});
  }
  return Polygon::make(std::move(out));
}

double angle_sum_deg(Vec2 p, std::span<const Vec2> poly) {
  double deg = angle_sum_raw(p, poly);
  return std::min(360.0, std::max(kMinAngleDeg, deg));
}

double angle_sum_deg(Vec2 p, const Polygon& poly) {
  return angle_sum_deg(p, std::span<const Vec2>(poly.pts()));
}

double winding_sum_deg(Vec2 p, std::span<const Vec2> poly) {
  size_t n = poly.size();
  double total = 0.0;
  Vec2 u = clamped_dir(p, poly[0]);
  Vec2 first = u;
  for (size_t k = 0; k < n; ++k) {
    Vec2 w = (k + 1 < n) ? clamped_dir(p, poly[k + 1]) : first;
    total += std::atan2(cross(u, w), dot(u, w));
    u = w;
  }
  return total * (180.0 / kPi);
}

double winding_sum_deg(Vec2 p, const Polygon& poly) {
  return winding_sum_deg(p, std::span<const Vec2>(poly.pts()));
}

namespace {

AngleMap angle_map_impl(std::span<const Vec2> poly, int h, int w, bool parallel) {
  if (h < 1 || w < 1) throw std::invalid_argument("angle_map grid must be positive");
  AngleMap map;
  map.h = h;
  map.w = w;
  map.v.assign(size_t(h) * w, 0.0);
  auto row = [&](int r) {
    double ci = (r + 0.5) / h;
    for (int c = 0; c < w; ++c)
      map.v[size_t(r) * w + c] = angle_sum_deg({ci, (c + 0.5) / w}, poly);
  };
  if (parallel)
    parallel_for(h, row);
  else
    serial_for(h, row);
  return map;
}

}  // namespace

AngleMap angle_map(std::span<const Vec2> poly, int h, int w) {
  return angle_map_impl(poly, h, w, true);
}

AngleMap angle_map_serial(std::span<const Vec2> poly, int h, int w) {
  return angle_map_impl(poly, h, w, false);
}

AngleMap angle_map(const Polygon& poly, int h, int w) {
  return angle_map_impl(std::span<const Vec2>(poly.pts()), h, w, true);
}

namespace {

// Even-odd rule along the scanline i = y: a cell center (y, x) is inside iff
// an odd number of edge crossings lies at j < x. Half-open vertex rule keeps
// shared endpoints from double counting.
void raster_row(int r, int h, int w, std::span<const Vec2> pts, uint8_t* out) {
  double y = (r + 0.5) / h;
  size_t n = pts.size();
  std::vector<double> xs;
  for (size_t k = 0; k < n; ++k) {
    Vec2 a = pts[k], b = pts[(k + 1) % n];
    if ((a.i <= y) == (b.i <= y)) continue;
    xs.push_back(a.j + (y - a.i) * (b.j - a.j) / (b.i - a.i));
  }
  std::sort(xs.begin(), xs.end());
  size_t idx = 0;
  int parity = 0;
  for (int c = 0; c < w; ++c) {
    double x = (c + 0.5) / w;
    while (idx < xs.size() && xs[idx] < x) {
      parity ^= 1;
      ++idx;
    }
    out[c] = uint8_t(parity);
  }
}

BinaryMask raster_impl(std::span<const Vec2> pts, int h, int w, bool parallel) {
  if (h < 1 || w < 1) throw std::invalid_argument("raster grid must be positive");
  BinaryMask m;
  m.h = h;
  m.w = w;
  m.v.assign(size_t(h) * w, 0);
  if (pts.size() < 3) return m;
  auto row = [&](int r) { raster_row(r, h, w, pts, m.v.data() + size_t(r) * w); };
  if (parallel)
    parallel_for(h, row);
  else
    serial_for(h, row);
  return m;
}

}  // namespace

BinaryMask rasterize(const Polygon& poly, int h, int w) {
  return raster_impl(std::span<const Vec2>(poly.pts()), h, w, true);
}

BinaryMask rasterize_points(std::span<const Vec2> pts, int h, int w) {
  // Drop exact consecutive duplicates; if fewer than 3 survive the mask is empty.
  std::vector<Vec2> clean;
  clean.reserve(pts.size());
  for (const Vec2& p : pts) {
    if (!clean.empty() && norm(p - clean.back()) <= kMinVertexSep) continue;
    clean.push_back(p);
  }
  while (clean.size() > 1 && norm(clean.front() - clean.back()) <= kMinVertexSep)
    clean.pop_back();
  return raster_impl(std::span<const Vec2>(clean), h, w, true);
}

BinaryMask rasterize_points_serial(std::span<const Vec2> pts, int h, int w) {
  std::vector<Vec2> clean;
  clean.reserve(pts.size());
  for (const Vec2& p : pts) {
    if (!clean.empty() && norm(p - clean.back()) <= kMinVertexSep) continue;
    clean.push_back(p);
  }
  while (clean.size() > 1 && norm(clean.front() - clean.back()) <= kMinVertexSep)
    clean.pop_back();
  return raster_impl(std::span<const Vec2>(clean), h, w, false);
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.h != b.h || a.w != b.w) throw std::invalid_argument("mask resolution mismatch");
  int64_t inter = 0, uni = 0;
  for (size_t k = 0; k < a.v.size(); ++k) {
    inter += a.v[k] & b.v[k];
    uni += a.v[k] | b.v[k];
  }
  if (uni == 0) return 1.0;
  return double(inter) / double(uni);
}

double box_iou(const Box& a, const Box& b) {
  double ih = std::min(a.rb.i, b.rb.i) - std::max(a.lt.i, b.lt.i);
  double iw = std::min(a.rb.j, b.rb.j) - std::max(a.lt.j, b.lt.j);
  if (ih <= 0.0 || iw <= 0.0) return 0.0;
  double inter = ih * iw;
  double a1 = (a.rb.i - a.lt.i) * (a.rb.j - a.lt.j);
  double a2 = (b.rb.i - b.lt.i) * (b.rb.j - b.lt.j);
  return inter / (a1 + a2 - inter);
}

double difficulty_degree(const Polygon& poly) {
  double a = std::fabs(shoelace_area(poly.pts()));
  if (a <= 1e-15) throw DegenerateGeometry("difficulty_degree needs positive area");
  double p = perimeter(poly.pts());
  return std::max(0.0, 1.0 - 4.0 * kPi * a / (p * p));
}

Polygon extract_contour(const BinaryMask& mask) {
  // Single 4-connected component required.
  int sr = -1, sc = -1;
  for (int r = 0; r < mask.h && sr < 0; ++r)
    for (int c = 0; c < mask.w; ++c)
      if (mask.at(r, c)) {
        sr = r;
        sc = c;
        break;
      }
  if (sr < 0) throw UnsupportedTopology("empty mask");

  std::vector<uint8_t> seen(mask.v.size(), 0);
  std::queue<std::pair<int, int>> q;
  q.push({sr, sc});
  seen[size_t(sr) * mask.w + sc] = 1;
  int64_t count = 0, total = 0;
  while (!q.empty()) {
    auto [r, c] = q.front();
    q.pop();
    ++count;
    const int dr[4] = {-1, 1, 0, 0}, dc[4] = {0, 0, -1, 1};
    for (int d = 0; d < 4; ++d) {
      int nr = r + dr[d], nc = c + dc[d];
      if (nr < 0 || nr >= mask.h || nc < 0 || nc >= mask.w) continue;
      size_t idx = size_t(nr) * mask.w + nc;
      if (mask.v[idx] && !seen[idx]) {
        seen[idx] = 1;
        q.push({nr, nc});
      }
    }
  }
  for (uint8_t b : mask.v) total += b;
  if (count != total) throw UnsupportedTopology("mask has multiple components");

  // Crack following: walk the outer boundary of the union of filled cell
  // squares along grid lines, keeping the filled region on the right of the
  // travel direction. Vertices land on cell corners, so only turn points are
  // emitted (collinear runs merge for free) and rasterizing the result at the
  // same resolution reproduces the mask — no cell center lies on a grid line.
  auto filled = [&](int r, int c) {
    return r >= 0 && r < mask.h && c >= 0 && c < mask.w && mask.at(r, c) != 0;
  };
  static const int dr[4] = {0, 1, 0, -1};  // E, S, W, N on the corner lattice
  static const int dc[4] = {1, 0, -1, 0};
  // Cells flanking the edge leaving corner (r, c) in direction d, on the
  // left or right of travel (screen coordinates, rows increasing downward).
  auto flank = [&](int r, int c, int d, bool right) {
    switch (d) {
      case 0: return right ? filled(r, c) : filled(r - 1, c);
      case 1: return right ? filled(r, c - 1) : filled(r, c);
      case 2: return right ? filled(r - 1, c - 1) : filled(r, c - 1);
      default: return right ? filled(r - 1, c) : filled(r - 1, c - 1);
    }
  };
  auto traversable = [&](int r, int c, int d) {
    return flank(r, c, d, true) && !flank(r, c, d, false);
  };

  // (sr, sc) is the topmost-leftmost filled cell; start at its top-left
  // corner heading east (always traversable there).
  std::vector<Vec2> pts;
  int r = sr, c = sc, d = 0;
  int first_dir = -1;
  bool closed = false;
  for (int64_t guard = 4 * int64_t(mask.h + 1) * (mask.w + 1) + 8; guard > 0; --guard) {
    // Prefer a right turn, then straight, then left, then back.
    int nd = -1;
    for (int turn : {1, 0, 3, 2}) {
      int cand = (d + turn) % 4;
      if (traversable(r, c, cand)) {
        nd = cand;
        break;
      }
    }
    if (nd < 0) throw UnsupportedTopology("boundary trace stuck");
    if (r == sr && c == sc) {
      if (first_dir < 0) {
        first_dir = nd;
      } else if (nd == first_dir) {
        closed = true;  // leaving the start corner the same way: loop done
        break;
      }
    }
    if (nd != d || pts.empty()) pts.push_back({double(r) / mask.h, double(c) / mask.w});
    r += dr[nd];
    c += dc[nd];
    d = nd;
  }
  if (!closed) throw UnsupportedTopology("boundary trace failed to close");
  if (pts.size() < 3) throw UnsupportedTopology("contour degenerates to fewer than 3 vertices");
  return Polygon::make(std::move(pts));
}

}  // namespace vgen
