// SPDX-License-Identifier: Apache-2.0
#include "pit/tensor.hpp"

#include "pit/error.hpp"

#include <sstream>

namespace pit {

namespace {
thread_local Tape* g_active_tape = nullptr;
thread_local StopGradientFreeze* g_active_freeze = nullptr;
}  // namespace

std::string shape_string(Index rows, Index cols) {
  std::ostringstream os;
  os << "[" << rows << "x" << cols << "]";
  return os.str();
}

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return Tensor(std::move(m), requires_grad);
}

Tensor Tensor::zeros(Index rows, Index cols, bool requires_grad) {
  return Tensor(Matrix::Zero(rows, cols), requires_grad);
}

std::string Tensor::shape_string() const { return pit::shape_string(rows(), cols()); }

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() requires a 1x1 tensor, got " + shape_string());
  }
  return node_->value(0, 0);
}

Matrix Tensor::grad() const {
  if (has_grad()) return node_->grad;
  return Matrix::Zero(rows(), cols());
}

void Tensor::accumulate_grad(const Matrix& g) const {
  if (node_->grad.size() == 0) {
    node_->grad = g;
  } else {
    node_->grad += g;
  }
}

Matrix& Tensor::grad_buffer() {
  if (node_->grad.size() == 0) node_->grad = Matrix::Zero(rows(), cols());
  return node_->grad;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() requires a scalar loss, got " +
                        (loss.defined() ? loss.shape_string() : std::string("undefined")));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward(): loss is not reachable from any tensor requiring a gradient");
  }
  Tensor seed = loss;
  seed.accumulate_grad(Matrix::Ones(1, 1));
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  entries_.clear();
}

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }
Tape* Tape::active() { return g_active_tape; }

StopGradientFreeze::StopGradientFreeze(Mode mode) : mode_(mode), previous_(g_active_freeze) {
  g_active_freeze = this;
}
StopGradientFreeze::~StopGradientFreeze() { g_active_freeze = previous_; }
StopGradientFreeze* StopGradientFreeze::active() { return g_active_freeze; }

Matrix StopGradientFreeze::intercept(const Matrix& value) {
  if (mode_ == Mode::kRecord) {
    values_.push_back(value);
    return value;
  }
  if (cursor_ >= values_.size()) {
    throw ContractError("StopGradientFreeze: replay requested more values than were recorded");
  }
  return values_[cursor_++];
}

}  // namespace pit
