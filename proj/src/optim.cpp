#include "pseudocorr/optim.hpp"

#include <cmath>
#include <numbers>

#include "pseudocorr/tensor.hpp"

namespace pseudocorr {

template <typename T>
void adamw_step(std::span<T> params, std::span<const T> grad, AdamWState<T>& state, double lr, const AdamWConfig& cfg) {
  if (params.size() != grad.size()) throw ValidationError("adamw: gradient size mismatch");
  if (state.m.size() != params.size()) state.reset(params.size());
  ++state.step;
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T bias1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(state.step)));
  const T bias2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(state.step)));
  const T decay = static_cast<T>(1.0 - lr * cfg.weight_decay);
  const T step_lr = static_cast<T>(lr);
  const T eps = static_cast<T>(cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grad[i];
    state.m[i] = b1 * state.m[i] + (T{1} - b1) * g;
    state.v[i] = b2 * state.v[i] + (T{1} - b2) * g * g;
    const T m_hat = state.m[i] / bias1;
    const T v_hat = state.v[i] / bias2;
    params[i] = params[i] * decay - step_lr * (m_hat / (std::sqrt(v_hat) + eps));
  }
}

double lr_schedule(std::int64_t step, std::int64_t total_steps, double peak_lr, double warmup_frac) {
  if (total_steps <= 0) throw ValidationError("lr_schedule: total_steps must be positive");
  if (step < 0 || step > total_steps) throw ValidationError("lr_schedule: step outside [0, total_steps]");
  const double initial = peak_lr / kOneCycleInitialDivisor;
  const double final_lr = peak_lr / kOneCycleFinalDivisor;
  const double warmup_end = warmup_frac * static_cast<double>(total_steps);
  const double s = static_cast<double>(step);
  if (s < warmup_end) return initial + (peak_lr - initial) * (s / warmup_end);
  const double span = static_cast<double>(total_steps) - warmup_end;
  if (span <= 0) return final_lr;
  const double t = (s - warmup_end) / span;
  return final_lr + (peak_lr - final_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

template void adamw_step<float>(std::span<float>, std::span<const float>, AdamWState<float>&, double,
                                const AdamWConfig&);
template void adamw_step<double>(std::span<double>, std::span<const double>, AdamWState<double>&, double,
                                 const AdamWConfig&);

}  // namespace pseudocorr
