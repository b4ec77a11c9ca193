// SPDX-License-Identifier: Apache-2.0
//
// Dense 64-bit tensors with reverse-mode differentiation.
//
// A Tensor is a shared handle to a rank-2 row-major value (scalars are 1x1,
// per-position vectors are Lx1). Operations in ops.hpp record a backward
// closure on the tape that is active on the calling thread; with no active
// tape nothing is recorded and the operations are plain Eigen arithmetic.
//
//   Tape tape;
//   {
//     Tape::Scope scope(tape);
//     Tensor loss = sum(square(matmul(x, w)));
//     tape.backward(loss);
//   }
//   w.grad();  // d loss / d w
#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace pit {

using Index = Eigen::Index;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tensor {
 public:
  struct Node {
    Matrix value;
    Matrix grad;  // empty until a gradient is accumulated
    bool requires_grad = false;
  };

  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor zeros(Index rows, Index cols, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  // Direct write access for leaves (optimizer updates, checkpoint loads).
  Matrix& mutable_value() { return node_->value; }

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }
  std::array<Index, 2> shape() const { return {rows(), cols()}; }
  std::string shape_string() const;

  // Value of a 1x1 tensor.
  double item() const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  bool has_grad() const { return node_ && node_->grad.size() != 0; }
  // Gradient buffer; a zero matrix of the value's shape when none was accumulated.
  Matrix grad() const;
  void zero_grad() { node_->grad.resize(0, 0); }
  // Handles share their node, so accumulation is allowed through const handles.
  void accumulate_grad(const Matrix& g) const;
  // Mutable access for in-place transforms such as clipping. Allocates zeros
  // when no gradient exists yet.
  Matrix& grad_buffer();

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

std::string shape_string(Index rows, Index cols);

// Ordered record of executed operations. backward() replays the record in
// reverse exactly once and then clears it; a tape is never reused across
// optimization steps.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(BackwardFn fn) { entries_.push_back(std::move(fn)); }
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  // Seeds d loss / d loss = 1 and propagates to every tensor that requires a
  // gradient. Throws ContractError for a non-scalar or unreachable loss.
  void backward(const Tensor& loss);

  // Makes a tape the recording target of the current thread for the lifetime
  // of the scope. Scopes nest; the previous tape is restored on exit.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* active();

 private:
  std::vector<BackwardFn> entries_;
};

// Finite-difference support for graphs containing stop_gradient. While a
// freeze is recording, each stop_gradient call stores its forward value; while
// replaying, the n-th stop_gradient call returns the n-th stored value instead
// of its argument. Re-evaluating a loss under replay therefore treats every
// stop-gradiented quantity as a constant, matching what backward() computes.
class StopGradientFreeze {
 public:
  enum class Mode { kRecord, kReplay };

  explicit StopGradientFreeze(Mode mode);
  ~StopGradientFreeze();
  StopGradientFreeze(const StopGradientFreeze&) = delete;
  StopGradientFreeze& operator=(const StopGradientFreeze&) = delete;

  void set_mode(Mode mode) {
    mode_ = mode;
    cursor_ = 0;
  }
  std::size_t recorded() const { return values_.size(); }

  static StopGradientFreeze* active();
  // Called by stop_gradient; returns the value to use.
  Matrix intercept(const Matrix& value);

 private:
  Mode mode_;
  std::size_t cursor_ = 0;
  std::vector<Matrix> values_;
  StopGradientFreeze* previous_;
};

}  // namespace pit
