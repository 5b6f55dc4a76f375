#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace fefa {

// Triangular cyclical learning rate: rises linearly from base_lr to max_lr
// over step_size iterations, falls back over the next step_size, repeats.
struct CyclicalLrSchedule {
  double base_lr = 1e-4;
  double max_lr = 1e-3;
  std::size_t step_size = 160;  // iterations per half-cycle

  void validate() const {
    if (base_lr <= 0.0 || max_lr <= 0.0 || base_lr > max_lr)
      throw std::invalid_argument("cyclical lr: need 0 < base_lr <= max_lr");
    if (step_size == 0)
      throw std::invalid_argument("cyclical lr: step_size must be positive");
  }
};

inline double cyclical_lr(std::size_t t, const CyclicalLrSchedule& sched) {
  sched.validate();
  const double step = static_cast<double>(sched.step_size);
  const double cycle = std::floor(1.0 + static_cast<double>(t) / (2.0 * step));
  const double x = std::abs(static_cast<double>(t) / step - 2.0 * cycle + 1.0);
  return sched.base_lr +
         (sched.max_lr - sched.base_lr) * std::max(0.0, 1.0 - x);
}

// Adam with bias correction. One state slot per parameter tensor, matched by
// position; the step counter is shared.
struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;

  void init(const std::vector<std::size_t>& sizes) {
    m.clear();
    v.clear();
    for (std::size_t s : sizes) {
      m.emplace_back(s, 0.0);
      v.emplace_back(s, 0.0);
    }
    step = 0;
  }
};

// Updates one parameter slot in place. Call with the same slot order every
// step; advance_step() once per optimizer step after all slots are updated.
inline void adam_update_slot(std::size_t slot, double* params, const double* grads,
                             std::size_t size, AdamState& state, double lr) {
  if (slot >= state.m.size() || state.m[slot].size() != size)
    throw std::invalid_argument("adam: state/parameter shape mismatch");
  const std::size_t t = state.step + 1;
  const double bc1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(t));
  double* m = state.m[slot].data();
  double* v = state.v[slot].data();
  for (std::size_t i = 0; i < size; ++i) {
    const double g = grads[i];
    if (std::isnan(g)) throw std::runtime_error("adam: NaN gradient");
    m[i] = AdamState::kBeta1 * m[i] + (1.0 - AdamState::kBeta1) * g;
    v[i] = AdamState::kBeta2 * v[i] + (1.0 - AdamState::kBeta2) * g * g;
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + AdamState::kEpsilon);
  }
}

}  // namespace fefa
