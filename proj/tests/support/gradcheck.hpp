// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "pit/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace pit::testing {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst;  // name of the tensor with the largest error
  // Same measure over all inputs concatenated into one vector.
  double global_relative_error = 0.0;
  double max_absolute_error = 0.0;
  Index entries = 0;
};

// Compares reverse-mode gradients of loss() against central differences.
// loss() must rebuild the graph from the current tensor values on each call.
// Stop-gradient values are frozen at the unperturbed point, so the numerical
// derivative sees the same constants as backward(). The error of a tensor is
// |g - g_fd| / max(|g|, |g_fd|, floor) in the L2 norm over its entries.
GradCheckResult check_gradients(const std::function<Tensor()>& loss,
                                const std::vector<NamedTensor>& inputs, double step = 1e-5,
                                double floor = 1e-8);

}  // namespace pit::testing
