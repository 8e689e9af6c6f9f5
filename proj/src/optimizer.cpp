#include "semaug/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace semaug {

double noam_learning_rate(const AdamConfig& cfg, std::size_t step) {
  if (step == 0) throw std::invalid_argument("learning rate: step counts from 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(std::max<std::size_t>(cfg.warmup_steps, 1));
  return cfg.lr_scale / std::sqrt(static_cast<double>(cfg.d_model)) * std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamConfig& cfg, std::size_t step) {
  adam_step_lr(params, state, cfg, step, noam_learning_rate(cfg, step));
}

void adam_step_lr(std::span<Parameter* const> params, AdamState& state, const AdamConfig& cfg, std::size_t step,
                  double lr) {
  if (step == 0) throw std::invalid_argument("adam_step: step counts from 1");
  if (state.m.empty()) {
    for (const Parameter* p : params) {
      state.m.emplace_back(p->value.shape(), 0.0);
      state.v.emplace_back(p->value.shape(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step", "optimizer state tracks a different parameter set");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    if (m.shape() != p.value.shape() || p.grad.shape() != p.value.shape()) {
      throw ShapeError("adam_step", "state/gradient shape mismatch for " + p.name);
    }
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
      p.value[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.eps);
    }
  }
}

}  // namespace semaug
