// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "pit/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace pit {

struct OptimizerState {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Global L2 threshold applied before each update; <= 0 disables clipping.
  double clip_norm = 5.0;
  std::int64_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

// Bias-corrected Adam update of every parameter from its accumulated gradient.
// Parameters without a gradient are treated as having a zero gradient. The
// moment buffers are created on the first call and must keep matching the
// parameter shapes afterwards.
void adam_step(OptimizerState& state, std::span<Tensor> params);

// Scales all gradients by max_norm / g when their global L2 norm g exceeds
// max_norm. Returns g (before scaling).
double clip_global_norm(std::span<Tensor> params, double max_norm);

double global_grad_norm(std::span<const Tensor> params);

}  // namespace pit
