#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "support.hpp"
#include "vertexgen/geometry.hpp"
#include "vertexgen/rng.hpp"

using namespace vgen;
using testsup::dist_to_edges;
using testsup::point_in_polygon_evenodd;
using testsup::random_convex_polygon;
using testsup::random_star_polygon;

namespace {

Polygon unit_square() {
  return Polygon::make({{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}});
}

Polygon regular_ngon(int n, Vec2 c, double r) {
  std::vector<Vec2> pts;
  pts.reserve(size_t(n));
  for (int k = 0; k < n; ++k) {
    double a = 2.0 * kPi * k / n;
    pts.push_back({c.i + r * std::cos(a), c.j + r * std::sin(a)});
  }
  return Polygon::make(std::move(pts));
}

Polygon fixed_star(int spikes, Vec2 c, double ro, double ri) {
  std::vector<Vec2> pts;
  pts.reserve(size_t(2 * spikes));
  for (int k = 0; k < 2 * spikes; ++k) {
    double a = kPi * k / spikes;
    double r = (k % 2 == 0) ? ro : ri;
    pts.push_back({c.i + r * std::cos(a), c.j + r * std::sin(a)});
  }
  return Polygon::make(std::move(pts));
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("polygon validation") {
    CHECK_THROWS_AS(Polygon::make({{0, 0}, {1, 1}}), std::invalid_argument);
    CHECK_THROWS_AS(Polygon::make({{0, 0}, {0, 0}, {1, 1}}), std::invalid_argument);
    // Closing edge duplicates count too.
    CHECK_THROWS_AS(Polygon::make({{0, 0}, {1, 0}, {0, 0.0}}), std::invalid_argument);
    // Clockwise input is stored with positive (counter-clockwise) orientation.
    Polygon p = Polygon::make({{0.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}, {1.0, 0.0}});
    CHECK(shoelace_area(p.pts()) > 0.0);
  }

  TEST_CASE("shoelace area and perimeter of the unit square") {
    Polygon sq = unit_square();
    CHECK(shoelace_area(sq.pts()) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(perimeter(sq.pts()) == doctest::Approx(4.0).epsilon(1e-12));
  }

  TEST_CASE("contour sampling: unit square corners, start topmost-leftmost") {
    Polygon sq = unit_square();
    Polygon s4 = sample_contour_vertices(sq, 4);
    REQUIRE(s4.size() == 4);
    // Start vertex has the smallest i (ties: smallest j); traversal follows
    // the stored counter-clockwise order.
    const std::vector<Vec2> want{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    for (size_t k = 0; k < 4; ++k) {
      CHECK(s4.pts()[k].i == doctest::Approx(want[k].i).epsilon(1e-12));
      CHECK(s4.pts()[k].j == doctest::Approx(want[k].j).epsilon(1e-12));
    }
    // Arc-length oracle at n = 8: samples sit at k * P / 8 along the walk.
    Polygon s8 = sample_contour_vertices(sq, 8);
    const std::vector<Vec2> want8{{0, 0},   {0.5, 0}, {1, 0}, {1, 0.5},
                                  {1, 1},   {0.5, 1}, {0, 1}, {0, 0.5}};
    REQUIRE(s8.size() == 8);
    for (size_t k = 0; k < 8; ++k) {
      CHECK(s8.pts()[k].i == doctest::Approx(want8[k].i).epsilon(1e-12));
      CHECK(s8.pts()[k].j == doctest::Approx(want8[k].j).epsilon(1e-12));
    }
    CHECK_THROWS_AS(sample_contour_vertices(sq, 2), std::invalid_argument);
    CHECK(kDefaultContourPoints == 36);
  }

  TEST_CASE("contour sampling: samples lie on the contour at uniform spacing") {
    Rng rng = Rng::derive(2024, "geom.sample");
    Polygon star = random_star_polygon(rng);
    Polygon s = sample_contour_vertices(star, 36);
    REQUIRE(s.size() == 36);
    double total = perimeter(star.pts());
    for (const Vec2& p : s.pts()) CHECK(dist_to_edges(p, star.pts()) < 1e-9);
    // Consecutive samples are one arc step apart along the contour; lower
    // bound via the chord, upper bound via the arc step itself.
    for (size_t k = 0; k < s.size(); ++k) {
      double chord = norm(s.pts()[(k + 1) % s.size()] - s.pts()[k]);
      CHECK(chord <= total / 36 + 1e-9);
    }
  }

  TEST_CASE("dense resampling preserves area within 1%") {
    Rng rng = Rng::derive(7, "geom.resample");
    for (int trial = 0; trial < 5; ++trial) {
      Polygon poly = trial % 2 == 0 ? random_star_polygon(rng) : random_convex_polygon(rng);
      Polygon dense = sample_contour_vertices(poly, 360);
      double a0 = std::fabs(shoelace_area(poly.pts()));
      double a1 = std::fabs(shoelace_area(dense.pts()));
      CHECK(std::fabs(a1 - a0) / a0 < 0.01);
    }
  }

  TEST_CASE("angle sum: interior, far field, and arctangent oracle") {
    Polygon sq = unit_square();
    CHECK(angle_sum_deg({0.5, 0.5}, sq) == doctest::Approx(360.0).epsilon(1e-12));
    CHECK(angle_sum_deg({1000.5, 0.5}, sq) < 5.0);

    // Independent long-double oracle at (2, 2): per-edge arctangent sum with
    // shuffled edge order.
    Vec2 p{2.0, 2.0};
    const auto& v = sq.pts();
    std::vector<size_t> order(v.size());
    std::iota(order.begin(), order.end(), size_t(0));
    Rng rng = Rng::derive(3, "geom.shuffle");
    for (size_t k = order.size(); k > 1; --k)
      std::swap(order[k - 1], order[size_t(rng.uniform_int(0, int64_t(k - 1)))]);
    long double sum = 0.0L;
    for (size_t e : order) {
      Vec2 a = v[e], b = v[(e + 1) % v.size()];
      long double ui = a.i - p.i, uj = a.j - p.j;
      long double wi = b.i - p.i, wj = b.j - p.j;
      long double cr = ui * wj - uj * wi;
      long double dt = ui * wi + uj * wj;
      sum += atan2l(fabsl(cr), dt);
    }
    double oracle_deg = double(sum * 180.0L / 3.14159265358979323846264338327950288L);
    CHECK(std::fabs(angle_sum_deg(p, sq) - oracle_deg) < 1e-9);
  }

  TEST_CASE("angle sum invariances") {
    Rng rng = Rng::derive(11, "geom.invar");
    Polygon poly = random_convex_polygon(rng);
    Vec2 p{0.31, 0.77};
    double base = angle_sum_deg(p, poly);

    // Cyclic rotation of the vertex list.
    std::vector<Vec2> rot(poly.pts().begin() + 2, poly.pts().end());
    rot.insert(rot.end(), poly.pts().begin(), poly.pts().begin() + 2);
    CHECK(angle_sum_deg(p, std::span<const Vec2>(rot)) == doctest::Approx(base).epsilon(1e-12));

    // Simultaneous translation of point and polygon.
    Vec2 shift{12.5, -3.75};
    std::vector<Vec2> moved;
    for (Vec2 q : poly.pts()) moved.push_back(q + shift);
    CHECK(angle_sum_deg(p + shift, std::span<const Vec2>(moved)) ==
          doctest::Approx(base).epsilon(1e-9));

    // Uniform scaling about the query point leaves the value unchanged.
    std::vector<Vec2> scaled;
    for (Vec2 q : poly.pts()) scaled.push_back(p + (q - p) * 3.25);
    CHECK(angle_sum_deg(p, std::span<const Vec2>(scaled)) == doctest::Approx(base).epsilon(1e-9));
  }

  TEST_CASE("angle map: convex interior cells reach 360, exterior stays below") {
    Polygon poly = regular_ngon(8, {0.5, 0.5}, 0.3);
    AngleMap am = angle_map(poly, 64, 64);
    REQUIRE(am.h == 64);
    REQUIRE(am.w == 64);
    CHECK(kDefaultAngleGrid == 64);
    int interior = 0, exterior = 0;
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 64; ++c) {
        Vec2 cc{(r + 0.5) / 64.0, (c + 0.5) / 64.0};
        if (dist_to_edges(cc, poly.pts()) < 1e-6) continue;
        if (point_in_polygon_evenodd(cc, poly.pts())) {
          CHECK(am.at(r, c) == doctest::Approx(360.0).epsilon(1e-6));
          ++interior;
        } else {
          CHECK(am.at(r, c) < 360.0);
          ++exterior;
        }
      }
    CHECK(interior > 100);
    CHECK(exterior > 100);
    // Cells are evaluated at their centers.
    CHECK(am.at(5, 9) == angle_sum_deg({5.5 / 64.0, 9.5 / 64.0}, poly));
  }

  TEST_CASE("angle classification matches even-odd ray casting") {
    Rng rng = Rng::derive(21, "geom.classify");
    for (int trial = 0; trial < 10; ++trial) {
      bool convex = trial % 2 == 0;
      Polygon poly = convex ? random_convex_polygon(rng) : random_star_polygon(rng);
      for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c) {
          Vec2 cc{(r + 0.5) / 64.0, (c + 0.5) / 64.0};
          if (dist_to_edges(cc, poly.pts()) < 1e-6) continue;
          bool in_angle = inside_by_angle(cc, poly.pts());
          bool in_oracle = point_in_polygon_evenodd(cc, poly.pts());
          REQUIRE(in_angle == in_oracle);
          // On convex polygons the unsigned sum is an equivalent classifier:
          // it saturates at 360 exactly when inside.
          if (convex) REQUIRE((angle_sum_deg(cc, poly) > 360.0 - 1e-6) == in_oracle);
        }
    }
  }

  TEST_CASE("rasterize: left-half square fills the left two columns") {
    Polygon left = Polygon::make({{0.0, 0.0}, {1.0, 0.0}, {1.0, 0.5}, {0.0, 0.5}});
    BinaryMask m = rasterize(left, 4, 4);
    int ones = 0;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) {
        CHECK(m.at(r, c) == (c < 2 ? 1 : 0));
        ones += m.at(r, c);
      }
    CHECK(ones == 8);
  }

  TEST_CASE("rasterize agrees with the even-odd oracle at cell centers") {
    Rng rng = Rng::derive(5, "geom.raster");
    for (int trial = 0; trial < 6; ++trial) {
      Polygon poly = trial % 2 == 0 ? random_star_polygon(rng) : random_convex_polygon(rng);
      BinaryMask m = rasterize(poly, 64, 64);
      for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c) {
          Vec2 cc{(r + 0.5) / 64.0, (c + 0.5) / 64.0};
          if (dist_to_edges(cc, poly.pts()) < 1e-6) continue;
          REQUIRE(int(m.at(r, c)) == int(point_in_polygon_evenodd(cc, poly.pts())));
        }
    }
  }

  TEST_CASE("rasterize: triangle inside one cell lights at most one cell") {
    Polygon tri = Polygon::make({{0.51, 0.51}, {0.60, 0.52}, {0.55, 0.60}});
    BinaryMask m = rasterize(tri, 4, 4);
    int ones = 0;
    for (uint8_t v : m.v) ones += v;
    CHECK(ones <= 1);
  }

  TEST_CASE("mask and box IoU") {
    Polygon sq = regular_ngon(16, {0.5, 0.5}, 0.25);
    BinaryMask a = rasterize(sq, 32, 32);
    CHECK(mask_iou(a, a) == 1.0);

    BinaryMask e1, e2;
    e1.h = e2.h = 4;
    e1.w = e2.w = 4;
    e1.v.assign(16, 0);
    e2.v.assign(16, 0);
    CHECK(mask_iou(e1, e2) == 1.0);

    BinaryMask bad;
    bad.h = 2;
    bad.w = 2;
    bad.v.assign(4, 0);
    CHECK_THROWS_AS(mask_iou(a, bad), std::invalid_argument);

    Box b1 = Box::make({0.1, 0.1}, {0.2, 0.2});
    Box b2 = Box::make({0.5, 0.5}, {0.7, 0.7});
    CHECK(box_iou(b1, b2) == 0.0);

    // Rectangles [0,2]x[0,1] and [1,3]x[0,1]: intersection 1, union 3.
    Box r1 = Box::make({0.0, 0.0}, {2.0, 1.0});
    Box r2 = Box::make({1.0, 0.0}, {3.0, 1.0});
    CHECK(box_iou(r1, r2) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(box_iou(r2, r1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    CHECK_THROWS_AS(Box::make({0.5, 0.5}, {0.5, 0.7}), std::invalid_argument);
  }

  TEST_CASE("difficulty degree: isoperimetric values and invariances") {
    Polygon circle_ish = regular_ngon(360, {0.5, 0.5}, 0.3);
    CHECK(difficulty_degree(circle_ish) < 0.001);

    Polygon sq = unit_square();
    CHECK(difficulty_degree(sq) == doctest::Approx(1.0 - kPi / 4.0).epsilon(1e-12));

    Polygon star = fixed_star(5, {0.5, 0.5}, 0.3, 0.13);
    std::vector<Vec2> hull_pts;
    for (size_t k = 0; k < star.size(); k += 2) hull_pts.push_back(star.pts()[k]);
    Polygon hull = Polygon::make(std::move(hull_pts));
    CHECK(difficulty_degree(star) > difficulty_degree(hull));
    CHECK(kHardSampleThreshold == 0.2);

    // Scale and translation invariance.
    std::vector<Vec2> moved;
    for (Vec2 q : star.pts()) moved.push_back({q.i * 0.3 + 5.0, q.j * 0.3 - 2.0});
    CHECK(difficulty_degree(Polygon::make(std::move(moved))) ==
          doctest::Approx(difficulty_degree(star)).epsilon(1e-12));
  }

  TEST_CASE("extract contour: centered block, errors, and idempotence") {
    BinaryMask m;
    m.h = m.w = 4;
    m.v.assign(16, 0);
    for (int r = 1; r <= 2; ++r)
      for (int c = 1; c <= 2; ++c) m.v[size_t(r) * 4 + c] = 1;
    Polygon p = extract_contour(m);
    CHECK(p.size() == 4);
    // The contour bounds the filled cell squares themselves.
    CHECK(shoelace_area(p.pts()) == doctest::Approx(0.25).epsilon(1e-12));
    double lo_i = 1.0, hi_i = 0.0;
    for (Vec2 q : p.pts()) {
      lo_i = std::min(lo_i, q.i);
      hi_i = std::max(hi_i, q.i);
    }
    CHECK(lo_i == 0.25);
    CHECK(hi_i == 0.75);

    BinaryMask empty;
    empty.h = empty.w = 4;
    empty.v.assign(16, 0);
    CHECK_THROWS_AS(extract_contour(empty), UnsupportedTopology);

    BinaryMask split;
    split.h = split.w = 8;
    split.v.assign(64, 0);
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) {
        split.v[size_t(r) * 8 + c] = 1;
        split.v[size_t(r + 6) * 8 + (c + 6)] = 1;
      }
    CHECK_THROWS_AS(extract_contour(split), UnsupportedTopology);

    // rasterize(extract_contour(.)) is idempotent at fixed resolution. Seed
    // picked so the star's 64^2 raster stays 4-connected (thin spikes can
    // pinch off at coarse grids, which is a rejected topology, not a bug).
    Rng rng = Rng::derive(20, "geom.idem");
    Polygon star = random_star_polygon(rng);
    BinaryMask m0 = rasterize(star, 64, 64);
    BinaryMask f1 = rasterize(extract_contour(m0), 64, 64);
    BinaryMask f2 = rasterize(extract_contour(f1), 64, 64);
    CHECK(f1.v == f2.v);
    // This tracer bounds exactly the filled cells, so one pass is enough.
    CHECK(f1.v == m0.v);
  }

  TEST_CASE("extract contour: area recovered within 2% at 256^2") {
    Rng rng = Rng::derive(23, "geom.area256");
    for (int trial = 0; trial < 3; ++trial) {
      Polygon poly = random_convex_polygon(rng);
      BinaryMask m = rasterize(poly, 256, 256);
      Polygon back = extract_contour(m);
      double a0 = std::fabs(shoelace_area(poly.pts()));
      double a1 = std::fabs(shoelace_area(back.pts()));
      CHECK(std::fabs(a1 - a0) / a0 < 0.02);
    }
  }
}
