#pragma once

// Shared test helpers: finite-difference gradient checking, random polygon
// generators, and an even-odd point-in-polygon oracle that is independent of
// the angle-summation code under test.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vertexgen/geometry.hpp"
#include "vertexgen/rng.hpp"
#include "vertexgen/tensor.hpp"

namespace testsup {

// Error metric for gradient checks: relative where the magnitude supports it,
// absolute near zero.
inline double fd_error(double analytic, double fd) {
  double scale = std::max(std::abs(analytic), std::abs(fd));
  if (scale > 1e-3) return std::abs(analytic - fd) / scale;
  return std::abs(analytic - fd);
}

// Max finite-difference error of a scalar-valued graph over its inputs.
// `build` receives a fresh tape plus one input node per entry of `inputs` and
// must return the scalar loss node.
template <class Build>
double max_fd_error_inputs(const std::vector<vgen::TensorData<double>>& inputs, Build&& build,
                           double step = 1e-4) {
  using vgen::Tape;
  using vgen::TensorData;
  auto eval = [&](const std::vector<TensorData<double>>& vals) {
    Tape<double> tape;
    std::vector<Tape<double>::Id> ids;
    ids.reserve(vals.size());
    for (const auto& t : vals) ids.push_back(tape.input(t));
    auto loss = build(tape, ids);
    return double(tape.val(loss).v[0]);
  };

  Tape<double> tape;
  std::vector<Tape<double>::Id> ids;
  ids.reserve(inputs.size());
  for (const auto& t : inputs) ids.push_back(tape.input(t));
  auto loss = build(tape, ids);
  tape.backward(loss);

  double max_err = 0.0;
  auto work = inputs;
  for (size_t k = 0; k < inputs.size(); ++k) {
    const auto& g = tape.grad_of(ids[k]);
    for (size_t e = 0; e < inputs[k].v.size(); ++e) {
      double keep = work[k].v[e];
      work[k].v[e] = keep + step;
      double lp = eval(work);
      work[k].v[e] = keep - step;
      double lm = eval(work);
      work[k].v[e] = keep;
      double fd = (lp - lm) / (2.0 * step);
      double an = g.empty() ? 0.0 : double(g[e]);
      max_err = std::max(max_err, fd_error(an, fd));
    }
  }
  return max_err;
}

// Max finite-difference error over every scalar of every parameter in
// `store`. `eval_loss` must recompute the loss from the store's current
// values; `analytic` holds the gradients from one backward pass.
inline double max_fd_error_params(vgen::ParamStore<double>& store,
                                  const std::function<double()>& eval_loss, double step = 1e-4) {
  double max_err = 0.0;
  for (int k = 0; k < store.count(); ++k) {
    vgen::Param<double>& p = store.by_index(k);
    for (size_t e = 0; e < p.value.v.size(); ++e) {
      double keep = p.value.v[e];
      p.value.v[e] = keep + step;
      double lp = eval_loss();
      p.value.v[e] = keep - step;
      double lm = eval_loss();
      p.value.v[e] = keep;
      double fd = (lp - lm) / (2.0 * step);
      max_err = std::max(max_err, fd_error(double(p.grad.v[e]), fd));
    }
  }
  return max_err;
}

// Random convex polygon: vertices in convex position on a jitter-free circle
// (sorted angles), radius and center kept inside the unit scene.
inline vgen::Polygon random_convex_polygon(vgen::Rng& rng, int min_v = 5, int max_v = 12) {
  int n = int(rng.uniform_int(min_v, max_v));
  double r = rng.uniform(0.12, 0.35);
  vgen::Vec2 c{rng.uniform(r + 0.05, 1.0 - r - 0.05), rng.uniform(r + 0.05, 1.0 - r - 0.05)};
  std::vector<double> ang(static_cast<size_t>(n));
  for (double& a : ang) a = rng.uniform(0.0, 2.0 * vgen::kPi);
  std::sort(ang.begin(), ang.end());
  // Well-separated angles keep consecutive vertices from coinciding.
  for (int k = 1; k < n; ++k)
    if (ang[size_t(k)] - ang[size_t(k) - 1] < 1e-3) ang[size_t(k)] = ang[size_t(k) - 1] + 1e-3;
  std::vector<vgen::Vec2> pts;
  pts.reserve(size_t(n));
  for (int k = 0; k < n; ++k)
    pts.push_back({c.i + r * std::cos(ang[size_t(k)]), c.j + r * std::sin(ang[size_t(k)])});
  return vgen::Polygon::make(std::move(pts));
}

// Random star polygon: alternating outer/inner radii with jitter; simple by
// construction (radial monotone angles).
inline vgen::Polygon random_star_polygon(vgen::Rng& rng, int min_spikes = 4, int max_spikes = 8) {
  int spikes = int(rng.uniform_int(min_spikes, max_spikes));
  double ro = rng.uniform(0.18, 0.34);
  double ri = ro * rng.uniform(0.3, 0.55);
  vgen::Vec2 c{rng.uniform(ro + 0.05, 1.0 - ro - 0.05), rng.uniform(ro + 0.05, 1.0 - ro - 0.05)};
  double phase = rng.uniform(0.0, 2.0 * vgen::kPi);
  std::vector<vgen::Vec2> pts;
  pts.reserve(size_t(2 * spikes));
  for (int k = 0; k < 2 * spikes; ++k) {
    double a = phase + vgen::kPi * k / spikes;
    double r = (k % 2 == 0) ? ro * rng.uniform(0.9, 1.0) : ri * rng.uniform(0.85, 1.0);
    pts.push_back({c.i + r * std::cos(a), c.j + r * std::sin(a)});
  }
  return vgen::Polygon::make(std::move(pts));
}

// Even-odd (ray casting) point-in-polygon oracle, independent of angle sums.
inline bool point_in_polygon_evenodd(vgen::Vec2 p, const std::vector<vgen::Vec2>& poly) {
  bool in = false;
  size_t n = poly.size();
  for (size_t a = 0, b = n - 1; a < n; b = a++) {
    bool crosses = (poly[a].i > p.i) != (poly[b].i > p.i);
    if (!crosses) continue;
    double t = (p.i - poly[a].i) / (poly[b].i - poly[a].i);
    double j_at = poly[a].j + t * (poly[b].j - poly[a].j);
    if (p.j < j_at) in = !in;
  }
  return in;
}

// Distance from a point to the closest polygon edge.
inline double dist_to_edges(vgen::Vec2 p, const std::vector<vgen::Vec2>& poly) {
  double best = 1e300;
  size_t n = poly.size();
  for (size_t a = 0; a < n; ++a) {
    vgen::Vec2 u = poly[a], v = poly[(a + 1) % n];
    vgen::Vec2 d = v - u;
    double len2 = dot(d, d);
    double t = len2 > 0.0 ? std::clamp(dot(p - u, d) / len2, 0.0, 1.0) : 0.0;
    best = std::min(best, norm(p - (u + d * t)));
  }
  return best;
}

}  // namespace testsup
