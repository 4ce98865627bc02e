#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace pseudocorr {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.001;
};

/// Moment accumulators for one flat parameter vector.
template <typename T>
struct AdamWState {
  std::vector<T> m;
  std::vector<T> v;
  std::int64_t step = 0;

  void reset(std::size_t n) {
    m.assign(n, T{0});
    v.assign(n, T{0});
    step = 0;
  }
  friend bool operator==(const AdamWState&, const AdamWState&) = default;
};

/// One AdamW update with decoupled weight decay:
///   w <- w * (1 - lr * wd) - lr * m_hat / (sqrt(v_hat) + eps)
template <typename T>
void adamw_step(std::span<T> params, std::span<const T> grad, AdamWState<T>& state, double lr, const AdamWConfig& cfg);

/// One-cycle schedule: linear warmup from peak/25 to peak over the first
/// warmup_frac * total_steps, then cosine annealing down to peak/1e4.
double lr_schedule(std::int64_t step, std::int64_t total_steps, double peak_lr, double warmup_frac);

inline constexpr double kOneCycleInitialDivisor = 25.0;
inline constexpr double kOneCycleFinalDivisor = 1e4;

}  // namespace pseudocorr
