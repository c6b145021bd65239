#include <cmath>
#include <vector>

#include "doctest.h"
#include "vertexgen/anchor.hpp"
#include "vertexgen/rng.hpp"

using namespace vgen;

namespace {

// IoU of [0,h]x[0,w] against the same box with its left-top corner displaced
// by (a, b) -- written from the definition, independent of the implementation.
double displaced_iou(double h, double w, double a, double b) {
  double i0 = a, i1 = h, j0 = b, j1 = w;
  if (i0 >= i1 || j0 >= j1) return 0.0;
  double ih = std::min(h, i1) - std::max(0.0, i0);
  double iw = std::min(w, j1) - std::max(0.0, j0);
  if (ih <= 0.0 || iw <= 0.0) return 0.0;
  double inter = ih * iw;
  double uni = h * w + (i1 - i0) * (j1 - j0) - inter;
  return inter / uni;
}

// Brute-force worst-direction radius: for each direction, bisect the largest
// displacement keeping IoU >= min_iou, then take the minimum over directions.
double radius_oracle(double h, double w, double min_iou, int n_dirs) {
  double best = 1e300;
  for (int k = 0; k < n_dirs; ++k) {
    double th = 2.0 * kPi * k / n_dirs;
    double lo = 0.0, hi = std::hypot(h, w);
    for (int it = 0; it < 80; ++it) {
      double mid = 0.5 * (lo + hi);
      if (displaced_iou(h, w, mid * std::cos(th), mid * std::sin(th)) >= min_iou)
        lo = mid;
      else
        hi = mid;
    }
    best = std::min(best, lo);
  }
  return best;
}

}  // namespace

TEST_SUITE("anchor") {
  TEST_CASE("gaussian target: unit peak and radial decay") {
    Heatmap y = gaussian_target({20.5, 33.5}, {10.0, 14.0}, 64, 64);
    CHECK(y.at(20, 33) == 1.0);
    for (double v : y.v) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    // Radially non-increasing along rows and columns away from the peak.
    for (int r = 21; r < 64; ++r) CHECK(y.at(r, 33) <= y.at(r - 1, 33));
    for (int c = 34; c < 64; ++c) CHECK(y.at(20, c) <= y.at(20, c - 1));
    // Gaussian shape: log-value ratio at distances 2 vs 1 is exactly 4.
    double l1 = std::log(y.at(21, 33));
    double l2 = std::log(y.at(22, 33));
    CHECK(l2 / l1 == doctest::Approx(4.0).epsilon(1e-9));

    CHECK_THROWS_AS(gaussian_target({70.0, 5.0}, {10.0, 10.0}, 64, 64), std::invalid_argument);
    CHECK_THROWS_AS(gaussian_target({5.0, 5.0}, {0.0, 10.0}, 64, 64), std::invalid_argument);
  }

  TEST_CASE("gaussian target: small boxes clamp sigma to one cell") {
    // A 4x4-cell box has a worst-direction radius well below 3, so
    // sigma = max(1, r/3) = 1 and the value one cell from the peak is
    // exactly exp(-1/2).
    CHECK(radius_oracle(4.0, 4.0, 0.7, 720) < 3.0);
    Heatmap y = gaussian_target({32.5, 32.5}, {4.0, 4.0}, 64, 64);
    CHECK(y.at(33, 32) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  }

  TEST_CASE("corner displacement radius matches the brute-force oracle") {
    for (auto [h, w] : {std::pair{64.0, 64.0}, {10.0, 14.0}, {3.0, 40.0}}) {
      double impl = corner_displacement_radius(h, w, 0.7);
      double oracle = radius_oracle(h, w, 0.7, 2000);
      CHECK(std::fabs(impl - oracle) / oracle < 2e-3);
    }
    CHECK_THROWS_AS(corner_displacement_radius(0.0, 5.0, 0.7), std::invalid_argument);
    CHECK_THROWS_AS(corner_displacement_radius(5.0, 5.0, 1.5), std::invalid_argument);
  }

  TEST_CASE("gaussian sigma follows the IoU-0.7 radius of a 64x64-cell box") {
    double r = radius_oracle(64.0, 64.0, 0.7, 2000);
    double sigma = std::max(1.0, r / 3.0);
    Heatmap y = gaussian_target({100.5, 100.5}, {64.0, 64.0}, 200, 200);
    // Recover sigma^2 from the value one cell from the peak.
    double sigma2_map = -1.0 / (2.0 * std::log(y.at(101, 100)));
    CHECK(std::sqrt(sigma2_map) == doctest::Approx(sigma).epsilon(5e-3));
  }

  TEST_CASE("focal loss: constants, near-perfect prediction, hand-summed value") {
    CHECK(kFocalAlpha == 2.0);
    CHECK(kFocalBeta == 4.0);

    Heatmap target;
    target.h = target.w = 3;
    target.v.assign(9, 0.0);
    target.at(1, 1) = 1.0;

    Heatmap nearly = target;
    for (double& v : nearly.v) v = (v == 1.0) ? 1.0 - 1e-6 : 1e-6;
    CHECK(focal_loss(nearly, target) < 1e-4);

    Heatmap uniform;
    uniform.h = uniform.w = 3;
    uniform.v.assign(9, 0.5);
    // Peak cell: -(1-0.5)^2 log 0.5; eight background cells with target 0:
    // -(1-0)^4 * 0.5^2 * log(1-0.5); mean over nine cells.
    double hand = (0.25 * std::log(2.0) + 8.0 * 0.25 * std::log(2.0)) / 9.0;
    CHECK(focal_loss(uniform, target) == doctest::Approx(hand).epsilon(1e-12));

    Heatmap small;
    small.h = small.w = 2;
    small.v.assign(4, 0.5);
    CHECK_THROWS_AS(focal_loss(small, target), std::invalid_argument);
  }

  TEST_CASE("extract peak: one-hot, tie-break, and scan oracle") {
    Heatmap h;
    h.h = 8;
    h.w = 6;
    h.v.assign(48, 0.0);
    h.at(5, 2) = 1.0;
    CenterAnchor a = extract_peak(h);
    CHECK(a.center.i == 5.5);
    CHECK(a.center.j == 2.5);
    CHECK(a.h == 8.0);
    CHECK(a.w == 6.0);

    Heatmap flat;
    flat.h = flat.w = 4;
    flat.v.assign(16, 0.25);
    CenterAnchor f = extract_peak(flat);
    CHECK(f.center.i == 0.5);
    CHECK(f.center.j == 0.5);

    Rng rng = Rng::derive(31, "anchor.peak");
    for (int trial = 0; trial < 10; ++trial) {
      Heatmap r;
      r.h = r.w = 16;
      r.v.resize(256);
      for (double& v : r.v) v = rng.uniform(0.0, 1.0);
      CenterAnchor got = extract_peak(r);
      size_t best = 0;
      for (size_t k = 1; k < r.v.size(); ++k)
        if (r.v[k] > r.v[best]) best = k;
      CHECK(got.center.i == double(best / 16) + 0.5);
      CHECK(got.center.j == double(best % 16) + 0.5);
    }
  }

  TEST_CASE("normalization: anchor-centered values, round trip, equivariance") {
    CenterAnchor a{{20.0, 40.0}, 64.0, 64.0};
    Vec2 stored = normalize_point({20.0, 40.0}, a);
    CHECK(stored.i == 0.5);
    CHECK(stored.j == 0.5);

    Vec2 shifted = normalize_point({20.0 + 32.0, 40.0 + 32.0}, a);
    CHECK(shifted.i == 0.75);
    CHECK(shifted.j == 0.75);

    Rng rng = Rng::derive(32, "anchor.round");
    for (int k = 0; k < 1000; ++k) {
      Vec2 p{rng.uniform(-10.0, 74.0), rng.uniform(-10.0, 74.0)};
      Vec2 back = denormalize_point(normalize_point(p, a), a);
      CHECK(std::fabs(back.i - p.i) < 1e-12);
      CHECK(std::fabs(back.j - p.j) < 1e-12);
    }

    // Translating scene point and anchor together leaves stored values alone.
    Vec2 p{11.0, 52.5};
    CenterAnchor moved{{a.center.i + 7.25, a.center.j - 3.5}, a.h, a.w};
    Vec2 s0 = normalize_point(p, a);
    Vec2 s1 = normalize_point({p.i + 7.25, p.j - 3.5}, moved);
    CHECK(s1.i == doctest::Approx(s0.i).epsilon(1e-15));
    CHECK(s1.j == doctest::Approx(s0.j).epsilon(1e-15));

    CenterAnchor bad{{1.0, 1.0}, 0.0, 64.0};
    CHECK_THROWS_AS(normalize_point(p, bad), std::invalid_argument);
    CHECK(kDefaultHeatmapRes == 64);
  }

  TEST_CASE("peak of a gaussian target is its own center cell") {
    Rng rng = Rng::derive(33, "anchor.peakgauss");
    for (int trial = 0; trial < 20; ++trial) {
      Vec2 c{rng.uniform(0.0, 64.0 - 1e-9), rng.uniform(0.0, 64.0 - 1e-9)};
      Heatmap y = gaussian_target(c, {12.0, 9.0}, 64, 64);
      CenterAnchor a = extract_peak(y);
      CHECK(a.center.i == std::floor(c.i) + 0.5);
      CHECK(a.center.j == std::floor(c.j) + 0.5);
    }
  }
}
