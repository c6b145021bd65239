#pragma once

#include <functional>
#include <vector>

#include "vertexgen/common.hpp"

namespace vgen {

// Analog-bit style diffusion over flat coordinate vectors. Values in [0, 1]
// are mapped to [-b, b]; the cosine gamma(t) schedule is normalized so
// gamma(0) = 1 exactly and gamma(T) is forced to 0.
struct DiffusionSchedule {
  int t_max = 0;
  double b = 1.0;
  std::vector<double> gamma;  // size t_max + 1, strictly decreasing
};

struct DiffusionState {
  std::vector<double> x;
  int t = 0;
};

DiffusionSchedule make_schedule(int t_max, double b = 1.0);

std::vector<double> scale_to_analog(const std::vector<double>& v, double b);
// Clamps to [-b, b] first, then maps back to [0, 1].
std::vector<double> descale_from_analog(const std::vector<double>& x, double b);

DiffusionState forward_diffuse(const std::vector<double>& x0, int t,
                               const std::vector<double>& eps,
                               const DiffusionSchedule& sched);

// Deterministic update: estimate eps from (x_t, x0_hat), then re-noise to
// t_next. x0_hat is clamped to [-b, b] before use.
DiffusionState ddim_step(const DiffusionState& state, const std::vector<double>& x0_hat,
                         int t_next, const DiffusionSchedule& sched);

using DenoiseFn = std::function<std::vector<double>(const std::vector<double>&, int)>;

// Runs `steps` uniformly spaced DDIM steps from pure noise (seeded) down to
// t = 0 and returns the descaled [0, 1] vector. When `trace` is given it
// receives the descaled state after every step, final state included.
std::vector<double> sample(const DenoiseFn& denoise, int dim, int steps,
                           const DiffusionSchedule& sched, uint64_t rng_seed,
                           std::vector<std::vector<double>>* trace = nullptr);
inline constexpr int kDefaultSampleSteps = 4;
inline constexpr int kDefaultTrainSteps = 1000;

}  // namespace vgen
