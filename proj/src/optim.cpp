// SPDX-License-Identifier: Apache-2.0
#include "pit/optim.hpp"

#include "pit/error.hpp"

#include <cmath>
#include <string>

namespace pit {

void adam_step(OptimizerState& state, std::span<Tensor> params) {
  if (state.first_moment.empty()) {
    for (const Tensor& p : params) {
      state.first_moment.push_back(Matrix::Zero(p.rows(), p.cols()));
      state.second_moment.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adam_step: optimizer tracks " +
                         std::to_string(state.first_moment.size()) + " parameters, got " +
                         std::to_string(params.size()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    Matrix& m = state.first_moment[k];
    Matrix& v = state.second_moment[k];
    if (m.rows() != p.rows() || m.cols() != p.cols()) {
      throw DimensionError("adam_step: moment shape " + shape_string(m.rows(), m.cols()) +
                           " does not match parameter " + p.shape_string());
    }
    if (!p.has_grad()) {
      m *= state.beta1;
      v *= state.beta2;
    } else {
      const Matrix& g = p.node()->grad;
      m = state.beta1 * m + (1.0 - state.beta1) * g;
      v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    }
    p.mutable_value().array() -=
        state.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
  }
}

double global_grad_norm(std::span<const Tensor> params) {
  double acc = 0.0;
  for (const Tensor& p : params) {
    if (!p.has_grad()) continue;
    const Matrix& g = p.node()->grad;
    for (Index i = 0; i < g.size(); ++i) acc += g.data()[i] * g.data()[i];
  }
  return std::sqrt(acc);
}

double clip_global_norm(std::span<Tensor> params, double max_norm) {
  if (!(max_norm > 0.0)) throw ContractError("clip_global_norm: max_norm must be positive");
  const double norm = global_grad_norm(std::span<const Tensor>(params.data(), params.size()));
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (Tensor& p : params) {
      if (p.has_grad()) p.grad_buffer() *= factor;
    }
  }
  return norm;
}

}  // namespace pit
