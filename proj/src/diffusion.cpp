#include "vertexgen/diffusion.hpp"

#include <cmath>

#include "vertexgen/rng.hpp"

namespace vgen {

namespace {

void check_len(const std::vector<double>& a, const std::vector<double>& b,
               const char* what) {
  if (a.size() != b.size()) throw std::invalid_argument(std::string(what) + ": length mismatch");
}

double clamp(double x, double lo, double hi) { return x < lo ? lo : (x > hi ? hi : x); }

}  // namespace

DiffusionSchedule make_schedule(int t_max, double b) {
  if (t_max < 1) throw std::invalid_argument("schedule needs t_max >= 1");
  if (!(b > 0.0)) throw std::invalid_argument("schedule needs analog bound b > 0");
  constexpr double s = 0.008;
  auto f = [&](double u) {
    double c = std::cos((u + s) / (1.0 + s) * kPi / 2.0);
    return c * c;
  };
  DiffusionSchedule sched;
  sched.t_max = t_max;
  sched.b = b;
  sched.gamma.resize(t_max + 1);
  double f0 = f(0.0);
  for (int t = 0; t <= t_max; ++t) sched.gamma[t] = f(double(t) / t_max) / f0;
  sched.gamma[0] = 1.0;
  sched.gamma[t_max] = 0.0;
  return sched;
}

std::vector<double> scale_to_analog(const std::vector<double>& v, double b) {
  std::vector<double> x(v.size());
  for (size_t k = 0; k < v.size(); ++k) x[k] = (2.0 * v[k] - 1.0) * b;
  return x;
}

std::vector<double> descale_from_analog(const std::vector<double>& x, double b) {
  std::vector<double> v(x.size());
  for (size_t k = 0; k < x.size(); ++k) v[k] = (clamp(x[k], -b, b) / b + 1.0) / 2.0;
  return v;
}

DiffusionState forward_diffuse(const std::vector<double>& x0, int t,
                               const std::vector<double>& eps,
                               const DiffusionSchedule& sched) {
  if (t < 0 || t > sched.t_max) throw std::invalid_argument("forward_diffuse: t out of range");
  check_len(x0, eps, "forward_diffuse");
  double g = sched.gamma[t];
  double a = std::sqrt(g), c = std::sqrt(1.0 - g);
  DiffusionState st;
  st.t = t;
  st.x.resize(x0.size());
  for (size_t k = 0; k < x0.size(); ++k) st.x[k] = a * x0[k] + c * eps[k];
  return st;
}

DiffusionState ddim_step(const DiffusionState& state, const std::vector<double>& x0_hat,
                         int t_next, const DiffusionSchedule& sched) {
  if (t_next < 0 || t_next >= state.t) throw std::invalid_argument("ddim_step: need 0 <= t_next < t");
  if (state.t > sched.t_max) throw std::invalid_argument("ddim_step: state.t out of range");
  check_len(state.x, x0_hat, "ddim_step");
  double gt = sched.gamma[state.t];
  double gn = sched.gamma[t_next];
  double sa_t = std::sqrt(gt), sc_t = std::sqrt(1.0 - gt);
  double sa_n = std::sqrt(gn), sc_n = std::sqrt(1.0 - gn);
  DiffusionState out;
  out.t = t_next;
  out.x.resize(state.x.size());
  for (size_t k = 0; k < state.x.size(); ++k) {
    double x0 = clamp(x0_hat[k], -sched.b, sched.b);
    double eps = (gt >= 1.0) ? 0.0 : (state.x[k] - sa_t * x0) / sc_t;
    out.x[k] = sa_n * x0 + sc_n * eps;
  }
  return out;
}

std::vector<double> sample(const DenoiseFn& denoise, int dim, int steps,
                           const DiffusionSchedule& sched, uint64_t rng_seed,
                           std::vector<std::vector<double>>* trace) {
  if (steps < 1) throw std::invalid_argument("sample: steps must be >= 1");
  if (steps > sched.t_max) throw std::invalid_argument("sample: steps exceed schedule length");
  if (dim < 1) throw std::invalid_argument("sample: dim must be >= 1");
  Rng rng = Rng::derive(rng_seed, "diffusion.x_T");
  DiffusionState st;
  st.t = sched.t_max;
  st.x.resize(dim);
  for (double& x : st.x) x = rng.normal();
  if (trace) trace->clear();
  for (int k = 0; k < steps; ++k) {
    int t_next = int(std::llround(double(sched.t_max) * (steps - k - 1) / steps));
    std::vector<double> x0_hat = denoise(st.x, st.t);
    st = ddim_step(st, x0_hat, t_next, sched);
    if (trace) trace->push_back(descale_from_analog(st.x, sched.b));
  }
  return descale_from_analog(st.x, sched.b);
}

}  // namespace vgen
