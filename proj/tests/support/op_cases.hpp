// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gradcheck.hpp"

#include "pit/model.hpp"
#include "pit/training.hpp"

#include <functional>
#include <string>
#include <vector>

namespace pit::testing {

Matrix random_matrix(Index rows, Index cols, std::uint64_t seed, double lo = -1.0, double hi = 1.0);

// sum(y .* W) for a fixed random W, so every output entry reaches the loss
// with a distinct weight.
Tensor probe(const Tensor& y, std::uint64_t seed = 99);

struct OpCase {
  std::string name;
  std::function<GradCheckResult()> run;
};

// One finite-difference check per differentiable operation.
std::vector<OpCase> op_gradient_cases();

// Tiny model used for end-to-end gradient checks.
ModelConfig tiny_model_config(PriorMode mode = PriorMode::kFull);

// Gradient check of one pass objective over every model parameter.
GradCheckResult check_pass_gradients(PiTransformer& model, const Matrix& window,
                                     const TrainConfig& cfg, Pass pass);

}  // namespace pit::testing
