#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "semaug/tensor.hpp"

namespace semaug {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.998;
  double eps = 1e-9;
  std::size_t d_model = 64;
  std::size_t warmup_steps = 8000;
  /// Multiplier on the inverse-square-root schedule.
  double lr_scale = 1.0;
};

/// lr_scale * d_model^-0.5 * min(step^-0.5, step * warmup^-1.5), for step >= 1.
double noam_learning_rate(const AdamConfig& cfg, std::size_t step);

/// First and second moment estimates, one pair per parameter.
struct AdamState {
  std::vector<Tensor> m, v;
};

/// Bias-corrected Adam update of every parameter from its accumulated grad;
/// `step` counts from 1. Parameters with all-zero gradient and zero moments
/// stay unchanged.
void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamConfig& cfg, std::size_t step);

/// Same update with an explicit learning rate instead of the schedule.
void adam_step_lr(std::span<Parameter* const> params, AdamState& state, const AdamConfig& cfg, std::size_t step,
                  double lr);

}  // namespace semaug
