#include <cmath>
#include <vector>

#include "doctest.h"
#include "vertexgen/diffusion.hpp"
#include "vertexgen/rng.hpp"

using namespace vgen;

namespace {

std::vector<double> random_unit_vector(uint64_t seed, int n) {
  Rng rng = Rng::derive(seed, "diff.unit");
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = rng.uniform(0.0, 1.0);
  return v;
}

// Frozen toy denoiser: a mild linear pull toward a fixed target. Used to
// compare step-count discretizations of the deterministic reverse chain.
DenoiseFn toy_denoiser(const std::vector<double>& target, double a) {
  return [target, a](const std::vector<double>& x, int) {
    std::vector<double> out(x.size());
    for (size_t k = 0; k < x.size(); ++k) out[k] = target[k] + a * x[k];
    return out;
  };
}

}  // namespace

TEST_SUITE("diffusion") {
  TEST_CASE("schedule: endpoints and strict monotonicity") {
    DiffusionSchedule s = make_schedule(1000);
    CHECK(kDefaultTrainSteps == 1000);
    REQUIRE(s.gamma.size() == 1001);
    CHECK(s.gamma[0] == 1.0);
    CHECK(s.gamma[1000] == 0.0);
    CHECK(s.b == 1.0);
    for (size_t t = 1; t < s.gamma.size(); ++t) CHECK(s.gamma[t] < s.gamma[t - 1]);
    for (double g : s.gamma) {
      CHECK(g >= 0.0);
      CHECK(g <= 1.0);
    }
    CHECK_THROWS_AS(make_schedule(0), std::invalid_argument);
  }

  TEST_CASE("scale/descale: midpoint, clamping, and exact identity") {
    CHECK(scale_to_analog({0.5}, 1.0)[0] == 0.0);
    CHECK(descale_from_analog({0.0}, 1.0)[0] == 0.5);
    CHECK(descale_from_analog({1.7}, 1.0)[0] == 1.0);
    CHECK(descale_from_analog({-2.3}, 1.0)[0] == 0.0);

    std::vector<double> v = random_unit_vector(1, 256);
    v.insert(v.end(), {0.0, 0.25, 0.3, 0.5, 1.0, 1.0 / 3.0});
    std::vector<double> round = descale_from_analog(scale_to_analog(v, 1.0), 1.0);
    for (size_t k = 0; k < v.size(); ++k) CHECK(round[k] == v[k]);
  }

  TEST_CASE("forward diffusion: endpoints and linear form") {
    DiffusionSchedule s = make_schedule(1000);
    std::vector<double> x0{-0.5, 0.2, 0.8, -1.0};
    std::vector<double> eps{0.3, -1.1, 0.7, 2.0};

    DiffusionState at0 = forward_diffuse(x0, 0, eps, s);
    CHECK(at0.t == 0);
    for (size_t k = 0; k < x0.size(); ++k) CHECK(at0.x[k] == x0[k]);

    std::vector<double> zero(x0.size(), 0.0);
    DiffusionState noiseless = forward_diffuse(x0, 400, zero, s);
    double root = std::sqrt(s.gamma[400]);
    for (size_t k = 0; k < x0.size(); ++k)
      CHECK(noiseless.x[k] == doctest::Approx(root * x0[k]).epsilon(1e-15));

    CHECK_THROWS_AS(forward_diffuse(x0, 10, {0.0, 0.0}, s), std::invalid_argument);
  }

  TEST_CASE("forward diffusion: Monte-Carlo moments at fixed t") {
    DiffusionSchedule s = make_schedule(1000);
    const int t = 500;
    std::vector<double> x0{-0.5, 0.2, 0.8, -1.0};
    const int draws = 100000;
    Rng rng = Rng::derive(99, "diff.mc");
    std::vector<double> mean(x0.size(), 0.0), m2(x0.size(), 0.0);
    std::vector<double> eps(x0.size());
    for (int d = 0; d < draws; ++d) {
      for (double& e : eps) e = rng.normal();
      DiffusionState st = forward_diffuse(x0, t, eps, s);
      for (size_t k = 0; k < x0.size(); ++k) {
        mean[k] += st.x[k];
        m2[k] += st.x[k] * st.x[k];
      }
    }
    double root = std::sqrt(s.gamma[t]);
    for (size_t k = 0; k < x0.size(); ++k) {
      double mu = mean[k] / draws;
      double var = m2[k] / draws - mu * mu;
      CHECK(std::fabs(mu - root * x0[k]) < 0.01);
      CHECK(std::fabs(var - (1.0 - s.gamma[t])) < 0.02);
    }
  }

  TEST_CASE("ddim: exact recovery at t_next = 0 with the true clean state") {
    DiffusionSchedule s = make_schedule(1000);
    Rng rng = Rng::derive(4, "diff.ddim");
    std::vector<double> x0(8), eps(8);
    for (double& v : x0) v = rng.uniform(-1.0, 1.0);
    for (double& e : eps) e = rng.normal();

    DiffusionState xt = forward_diffuse(x0, 700, eps, s);
    DiffusionState back = ddim_step(xt, x0, 0, s);
    CHECK(back.t == 0);
    for (size_t k = 0; k < x0.size(); ++k) CHECK(back.x[k] == x0[k]);

    CHECK_THROWS_AS(ddim_step(xt, x0, 700, s), std::invalid_argument);
    CHECK_THROWS_AS(ddim_step(xt, x0, 800, s), std::invalid_argument);
  }

  TEST_CASE("ddim: oracle clean state reaches x0 for any step count") {
    DiffusionSchedule s = make_schedule(1000);
    Rng rng = Rng::derive(5, "diff.chain");
    std::vector<double> x0(6), eps(6);
    for (double& v : x0) v = rng.uniform(-1.0, 1.0);
    for (double& e : eps) e = rng.normal();
    for (int steps : {1, 3, 4, 7}) {
      DiffusionState st = forward_diffuse(x0, 1000, eps, s);
      for (int k = 0; k < steps; ++k) {
        int t_next = int(std::llround(double(s.t_max) * (steps - k - 1) / steps));
        st = ddim_step(st, x0, t_next, s);
      }
      REQUIRE(st.t == 0);
      for (size_t k = 0; k < x0.size(); ++k) CHECK(st.x[k] == x0[k]);
    }
  }

  TEST_CASE("ddim: 4-step and 1000-step chains agree for a frozen denoiser") {
    DiffusionSchedule s = make_schedule(1000);
    Rng rng = Rng::derive(6, "diff.steps");
    std::vector<double> target(10);
    for (double& c : target) c = rng.uniform(-0.6, 0.6);
    DenoiseFn toy = toy_denoiser(target, 0.1);

    std::vector<double> out4 = sample(toy, 10, 4, s, 12345);
    std::vector<double> out1000 = sample(toy, 10, 1000, s, 12345);
    double linf = 0.0;
    for (size_t k = 0; k < out4.size(); ++k)
      linf = std::max(linf, std::fabs(out4[k] - out1000[k]));
    CHECK(linf <= 0.05);
  }

  TEST_CASE("sample: determinism, range, default step count, and trace") {
    CHECK(kDefaultSampleSteps == 4);
    DiffusionSchedule s = make_schedule(1000);
    Rng rng = Rng::derive(7, "diff.sample");
    std::vector<double> target(12);
    for (double& c : target) c = rng.uniform(-0.8, 0.8);
    DenoiseFn toy = toy_denoiser(target, 0.1);

    std::vector<std::vector<double>> trace;
    std::vector<double> a = sample(toy, 12, 4, s, 42, &trace);
    std::vector<double> b = sample(toy, 12, 4, s, 42);
    CHECK(a == b);
    for (double v : a) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    REQUIRE(trace.size() == 4);
    CHECK(trace.back() == a);

    std::vector<double> other = sample(toy, 12, 4, s, 43);
    CHECK(other != a);
  }
}
