#include <cstring>
#include <vector>

#include "doctest.h"
#include "support.hpp"
#include "vertexgen/datagen.hpp"
#include "vertexgen/geometry.hpp"
#include "vertexgen/kernels.hpp"
#include "vertexgen/rng.hpp"

using namespace vgen;

namespace {

struct ThreadGuard {
  int saved;
  ThreadGuard() : saved(max_threads()) {}
  ~ThreadGuard() { set_threads(saved); }
};

template <class S>
std::vector<S> rnd_vec(size_t n, Rng& rng) {
  std::vector<S> v(n);
  for (auto& x : v) x = S(rng.uniform(-1.0, 1.0));
  return v;
}

template <class S>
bool bitwise_equal(const std::vector<S>& a, const std::vector<S>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(S)) == 0;
}

// Plain ascending-k triple loop, the reference semantics for all three layouts.
std::vector<double> naive_gemm(int m, int n, int k, const std::vector<double>& a,
                               const std::vector<double>& b, char layout) {
  std::vector<double> c(size_t(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int kk = 0; kk < k; ++kk) {
        double av = layout == 't' ? a[size_t(kk) * m + i] : a[size_t(i) * k + kk];
        // 'x' marks B stored transposed as [n, k]; 'n' and 't' keep B at [k, n].
        double bv = layout == 'x' ? b[size_t(j) * k + kk] : b[size_t(kk) * n + j];
        s += av * bv;
      }
      c[size_t(i) * n + j] = s;
    }
  return c;
}

}  // namespace

TEST_SUITE("parallel-kernels") {

TEST_CASE("gemm kernels match their serial twins bitwise at every thread count") {
  ThreadGuard guard;
  Rng rng = Rng::derive(400, "gemm");

  // One size below the parallel dispatch threshold, one above it.
  struct Size {
    int m, n, k;
  };
  for (Size sz : {Size{5, 7, 9}, Size{96, 32, 48}}) {
    CAPTURE(sz.m);
    CAPTURE(sz.k);
    auto a_nn = rnd_vec<float>(size_t(sz.m) * sz.k, rng);
    auto b_nn = rnd_vec<float>(size_t(sz.k) * sz.n, rng);
    auto a_tn = rnd_vec<float>(size_t(sz.k) * sz.m, rng);
    auto b_nt = rnd_vec<float>(size_t(sz.n) * sz.k, rng);
    auto c0 = rnd_vec<float>(size_t(sz.m) * sz.n, rng);

    for (bool acc : {false, true}) {
      CAPTURE(acc);
      auto ref_nn = c0, ref_nt = c0, ref_tn = c0;
      gemm_nn_serial(sz.m, sz.n, sz.k, a_nn.data(), sz.k, b_nn.data(), sz.n, ref_nn.data(),
                     sz.n, acc);
      gemm_nt_serial(sz.m, sz.n, sz.k, a_nn.data(), sz.k, b_nt.data(), sz.k, ref_nt.data(),
                     sz.n, acc);
      gemm_tn_serial(sz.m, sz.n, sz.k, a_tn.data(), sz.m, b_nn.data(), sz.n, ref_tn.data(),
                     sz.n, acc);

      for (int threads : {1, 2, 4}) {
        set_threads(threads);
        auto out_nn = c0, out_nt = c0, out_tn = c0;
        gemm_nn(sz.m, sz.n, sz.k, a_nn.data(), sz.k, b_nn.data(), sz.n, out_nn.data(), sz.n,
                acc);
        gemm_nt(sz.m, sz.n, sz.k, a_nn.data(), sz.k, b_nt.data(), sz.k, out_nt.data(), sz.n,
                acc);
        gemm_tn(sz.m, sz.n, sz.k, a_tn.data(), sz.m, b_nn.data(), sz.n, out_tn.data(), sz.n,
                acc);
        CHECK(bitwise_equal(out_nn, ref_nn));
        CHECK(bitwise_equal(out_nt, ref_nt));
        CHECK(bitwise_equal(out_tn, ref_tn));
      }
    }
  }
}

TEST_CASE("gemm kernels compute the right product") {
  Rng rng = Rng::derive(401, "gemm-oracle");
  const int m = 9, n = 6, k = 17;
  auto a = rnd_vec<double>(size_t(m) * k, rng);
  auto b = rnd_vec<double>(size_t(k) * n, rng);

  SUBCASE("nn is bitwise the ascending-k loop") {
    auto want = naive_gemm(m, n, k, a, b, 'n');
    std::vector<double> got(size_t(m) * n, 0.0);
    gemm_nn(m, n, k, a.data(), k, b.data(), n, got.data(), n, false);
    CHECK(bitwise_equal(got, want));
  }

  SUBCASE("nt matches within a lane-reassociation tolerance") {
    auto bt = rnd_vec<double>(size_t(n) * k, rng);  // B stored [n, k]
    auto want = naive_gemm(m, n, k, a, bt, 'x');
    std::vector<double> got(size_t(m) * n, 0.0);
    gemm_nt(m, n, k, a.data(), k, bt.data(), k, got.data(), n, false);
    for (size_t i = 0; i < want.size(); ++i)
      CHECK(std::fabs(got[i] - want[i]) < 1e-12);
  }

  SUBCASE("tn below the chunk threshold is bitwise the ascending-k loop") {
    auto at = rnd_vec<double>(size_t(k) * m, rng);  // A stored [k, m]
    auto want = naive_gemm(m, n, k, at, b, 't');
    std::vector<double> got(size_t(m) * n, 0.0);
    gemm_tn(m, n, k, at.data(), m, b.data(), n, got.data(), n, false);
    CHECK(bitwise_equal(got, want));
  }
}

TEST_CASE("chunked tn reduction is thread-invariant and accurate") {
  ThreadGuard guard;
  Rng rng = Rng::derive(402, "gemm-chunk");
  const int m = 6, n = 10, k = 4096;  // k >= 2048 engages the 8-way chunk split
  auto at = rnd_vec<double>(size_t(k) * m, rng);
  auto b = rnd_vec<double>(size_t(k) * n, rng);
  auto c0 = rnd_vec<double>(size_t(m) * n, rng);

  for (bool acc : {false, true}) {
    CAPTURE(acc);
    auto ref = c0;
    gemm_tn_serial(m, n, k, at.data(), m, b.data(), n, ref.data(), n, acc);
    for (int threads : {1, 2, 4}) {
      set_threads(threads);
      auto got = c0;
      gemm_tn(m, n, k, at.data(), m, b.data(), n, got.data(), n, acc);
      CHECK(bitwise_equal(got, ref));
    }

    auto want = naive_gemm(m, n, k, at, b, 't');
    for (size_t i = 0; i < want.size(); ++i) {
      double base = acc ? c0[i] : 0.0;
      CHECK(std::fabs(ref[i] - (base + want[i])) < 1e-10);
    }
  }
}

TEST_CASE("geometry and feature kernels match their serial twins bitwise") {
  ThreadGuard guard;
  Rng rng = Rng::derive(403, "geom");

  for (int threads : {1, 2, 4}) {
    set_threads(threads);
    CAPTURE(threads);

    for (int rep = 0; rep < 3; ++rep) {
      Polygon convex = testsup::random_convex_polygon(rng);
      Polygon star = testsup::random_star_polygon(rng);
      for (const Polygon* poly : {&convex, &star}) {
        AngleMap par = angle_map(*poly, 48, 48);
        AngleMap ser = angle_map_serial(std::span<const Vec2>(poly->pts()), 48, 48);
        REQUIRE(par.v.size() == ser.v.size());
        CHECK(bitwise_equal(par.v, ser.v));

        BinaryMask mp = rasterize_points(std::span<const Vec2>(poly->pts()), 64, 64);
        BinaryMask ms = rasterize_points_serial(std::span<const Vec2>(poly->pts()), 64, 64);
        REQUIRE(mp.v.size() == ms.v.size());
        CHECK(mp.v == ms.v);
      }
    }

    SceneSample scene = generate_scene(404, 0, {});
    std::vector<uint8_t> raster = rasterize_scene(scene, 32);
    std::vector<float> fp = cell_features(raster, 32);
    std::vector<float> fs = cell_features_serial(raster, 32);
    REQUIRE(fp.size() == fs.size());
    CHECK(bitwise_equal(fp, fs));
  }
}

}  // TEST_SUITE
