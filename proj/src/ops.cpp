// SPDX-License-Identifier: Apache-2.0
#include "pit/ops.hpp"

#include "pit/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace pit {

namespace {

bool track(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Wraps value in a result tensor and, when tracked, records bw(grad_out).
template <typename Backward>
Tensor finish(Matrix value, bool tracked, Backward bw) {
  Tensor out(std::move(value), tracked);
  if (tracked) {
    auto node = out.node();
    Tape::active()->record([node, bw = std::move(bw)]() {
      if (node->grad.size() == 0) return;
      bw(node->grad);
    });
  }
  return out;
}

void push(const Tensor& t, const Matrix& g) {
  if (t.requires_grad()) t.accumulate_grad(g);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

void require_scalar(const char* op, const Tensor& s) {
  if (s.size() != 1) {
    throw DimensionError(std::string(op) + ": expected a 1x1 tensor, got " + s.shape_string());
  }
}

template <typename F, typename D>
Tensor unary(const Tensor& a, F f, D df) {
  Matrix out = a.value().unaryExpr(f);
  const bool t = track({&a});
  return finish(std::move(out), t, [a, df](const Matrix& g) {
    push(a, g.cwiseProduct(a.value().unaryExpr(df)));
  });
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + a.shape_string() + " * " +
                         b.shape_string());
  }
  Matrix out = a.value() * b.value();
  return finish(std::move(out), track({&a, &b}), [a, b](const Matrix& g) {
    if (a.requires_grad()) push(a, g * b.value().transpose());
    if (b.requires_grad()) push(b, a.value().transpose() * g);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: inner dimensions differ, " + a.shape_string() + " * " +
                         b.shape_string() + "^T");
  }
  Matrix out = a.value() * b.value().transpose();
  return finish(std::move(out), track({&a, &b}), [a, b](const Matrix& g) {
    if (a.requires_grad()) push(a, g * b.value());
    if (b.requires_grad()) push(b, g.transpose() * a.value());
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Matrix out = a.value() + b.value();
  return finish(std::move(out), track({&a, &b}), [a, b](const Matrix& g) {
    push(a, g);
    push(b, g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Matrix out = a.value() - b.value();
  return finish(std::move(out), track({&a, &b}), [a, b](const Matrix& g) {
    push(a, g);
    if (b.requires_grad()) push(b, -g);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Matrix out = a.value().cwiseProduct(b.value());
  return finish(std::move(out), track({&a, &b}), [a, b](const Matrix& g) {
    if (a.requires_grad()) push(a, g.cwiseProduct(b.value()));
    if (b.requires_grad()) push(b, g.cwiseProduct(a.value()));
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_row: row " + row.shape_string() + " does not broadcast over " +
                         a.shape_string());
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  return finish(std::move(out), track({&a, &row}), [a, row](const Matrix& g) {
    push(a, g);
    if (row.requires_grad()) push(row, g.colwise().sum());
  });
}

Tensor row_scale(const Tensor& a, const Tensor& v) {
  if (v.cols() != 1 || v.rows() != a.rows()) {
    throw DimensionError("row_scale: column " + v.shape_string() + " does not match " +
                         a.shape_string());
  }
  Matrix out = v.value().col(0).asDiagonal() * a.value();
  return finish(std::move(out), track({&a, &v}), [a, v](const Matrix& g) {
    if (a.requires_grad()) push(a, v.value().col(0).asDiagonal() * g);
    if (v.requires_grad()) push(v, g.cwiseProduct(a.value()).rowwise().sum());
  });
}

Tensor scale(const Tensor& a, double factor) {
  Matrix out = a.value() * factor;
  return finish(std::move(out), track({&a}), [a, factor](const Matrix& g) { push(a, g * factor); });
}

Tensor mul_scalar(const Tensor& s, const Tensor& a) {
  require_scalar("mul_scalar", s);
  Matrix out = a.value() * s.item();
  return finish(std::move(out), track({&s, &a}), [s, a](const Matrix& g) {
    if (s.requires_grad()) push(s, Matrix::Constant(1, 1, g.cwiseProduct(a.value()).sum()));
    if (a.requires_grad()) push(a, g * s.item());
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  Matrix out = a.value().array() + c;
  return finish(std::move(out), track({&a}), [a](const Matrix& g) { push(a, g); });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Tensor reciprocal(const Tensor& a) {
  return unary(a, [](double x) { return 1.0 / x; }, [](double x) { return -1.0 / (x * x); });
}

Tensor exp(const Tensor& a) {
  Matrix out = a.value().array().exp();
  Matrix saved = out;
  return finish(std::move(out), track({&a}),
                [a, saved](const Matrix& g) { push(a, g.cwiseProduct(saved)); });
}

Tensor log(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Tensor tanh(const Tensor& a) {
  Matrix out = a.value().array().tanh();
  Matrix saved = out;
  return finish(std::move(out), track({&a}), [a, saved](const Matrix& g) {
    push(a, (g.array() * (1.0 - saved.array().square())).matrix());
  });
}

Tensor sigmoid(const Tensor& a) {
  Matrix out = a.value().unaryExpr([](double x) { return stable_sigmoid(x); });
  Matrix saved = out;
  return finish(std::move(out), track({&a}), [a, saved](const Matrix& g) {
    push(a, (g.array() * saved.array() * (1.0 - saved.array())).matrix());
  });
}

Tensor softplus(const Tensor& a) {
  return unary(a, [](double x) { return stable_softplus(x); },
               [](double x) { return stable_sigmoid(x); });
}

Tensor gelu(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
      },
      [](double x) {
        const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const Index n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw DimensionError("layer_norm: gain " + gain.shape_string() + " / bias " +
                         bias.shape_string() + " do not match " + x.shape_string());
  }
  Matrix xhat(x.rows(), n);
  Vector inv_std(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    const auto row = x.value().row(i);
    const double mu = row.sum() / static_cast<double>(n);
    const double var = (row.array() - mu).square().sum() / static_cast<double>(n);
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (row.array() - mu) * inv_std(i);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  return finish(std::move(out), track({&x, &gain, &bias}),
                [x, gain, bias, xhat, inv_std, n](const Matrix& g) {
                  if (bias.requires_grad()) push(bias, g.colwise().sum());
                  if (gain.requires_grad()) push(gain, g.cwiseProduct(xhat).colwise().sum());
                  if (!x.requires_grad()) return;
                  Matrix gxhat = (g.array().rowwise() * gain.value().row(0).array()).matrix();
                  Matrix gx(g.rows(), n);
                  for (Index i = 0; i < g.rows(); ++i) {
                    const double m1 = gxhat.row(i).sum() / static_cast<double>(n);
                    const double m2 = gxhat.row(i).dot(xhat.row(i)) / static_cast<double>(n);
                    gx.row(i) =
                        inv_std(i) * (gxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
                  }
                  push(x, gx);
                });
}

Mask causal_mask(Index length) {
  Mask m(length, length);
  for (Index i = 0; i < length; ++i) {
    for (Index j = 0; j < length; ++j) m(i, j) = j <= i;
  }
  return m;
}

namespace {

Tensor softmax_with(const Tensor& logits, const Mask* mask) {
  const Index rows = logits.rows();
  const Index cols = logits.cols();
  Matrix out = Matrix::Zero(rows, cols);
  const Matrix& z = logits.value();
  for (Index i = 0; i < rows; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (Index j = 0; j < cols; ++j) {
      if (mask != nullptr && !(*mask)(i, j)) continue;
      any = true;
      mx = std::max(mx, z(i, j));
    }
    if (!any) {
      throw ContractError("masked_softmax_rows: row " + std::to_string(i) +
                          " has no permitted entry (degenerate row)");
    }
    double total = 0.0;
    for (Index j = 0; j < cols; ++j) {
      if (mask != nullptr && !(*mask)(i, j)) continue;
      out(i, j) = std::exp(z(i, j) - mx);
      total += out(i, j);
    }
    out.row(i) /= total;
  }
  Matrix saved = out;
  return finish(std::move(out), track({&logits}), [logits, saved](const Matrix& g) {
    Vector dots = g.cwiseProduct(saved).rowwise().sum();
    Matrix gz = saved.cwiseProduct((g.colwise() - dots));
    push(logits, gz);
  });
}

}  // namespace

Tensor masked_softmax_rows(const Tensor& logits, const Mask& mask) {
  if (mask.rows() != logits.rows() || mask.cols() != logits.cols()) {
    throw DimensionError("masked_softmax_rows: mask " + shape_string(mask.rows(), mask.cols()) +
                         " does not match logits " + logits.shape_string());
  }
  for (Index i = 0; i < mask.rows(); ++i) {
    for (Index j = i + 1; j < mask.cols(); ++j) {
      if (mask(i, j)) {
        throw ContractError("masked_softmax_rows: mask permits future index j=" +
                            std::to_string(j) + " in row " + std::to_string(i));
      }
    }
  }
  return softmax_with(logits, &mask);
}

Tensor causal_softmax_rows(const Tensor& logits) {
  if (logits.rows() != logits.cols()) {
    throw DimensionError("causal_softmax_rows: logits must be square, got " +
                         logits.shape_string());
  }
  const Index n = logits.rows();
  Matrix out = Matrix::Zero(n, n);
  const Matrix& z = logits.value();
  for (Index i = 0; i < n; ++i) {
    const double mx = z.row(i).head(i + 1).maxCoeff();
    double total = 0.0;
    for (Index j = 0; j <= i; ++j) {
      out(i, j) = std::exp(z(i, j) - mx);
      total += out(i, j);
    }
    out.row(i).head(i + 1) /= total;
  }
  Matrix saved = out;
  return finish(std::move(out), track({&logits}), [logits, saved](const Matrix& g) {
    Vector dots = g.cwiseProduct(saved).rowwise().sum();
    push(logits, saved.cwiseProduct(g.colwise() - dots));
  });
}

Tensor softmax_rows(const Tensor& logits) { return softmax_with(logits, nullptr); }

Tensor kl_div_rows(const Tensor& p, const Tensor& q) {
  require_same_shape("kl_div_rows", p, q);
  const Matrix& pv = p.value();
  const Matrix& qv = q.value();
  for (Index i = 0; i < pv.rows(); ++i) {
    const double sp = pv.row(i).sum();
    const double sq = qv.row(i).sum();
    if (std::abs(sp - 1.0) > kRowSumTolerance || std::abs(sq - 1.0) > kRowSumTolerance) {
      throw NumericError("kl_div_rows: row " + std::to_string(i) +
                         " is not normalized (sum p=" + std::to_string(sp) +
                         ", sum q=" + std::to_string(sq) + ")");
    }
  }
  Matrix logp = pv.cwiseMax(kProbFloor).array().log();
  Matrix logq = qv.cwiseMax(kProbFloor).array().log();
  Matrix out(pv.rows(), 1);
  for (Index i = 0; i < pv.rows(); ++i) {
    double acc = 0.0;
    for (Index j = 0; j < pv.cols(); ++j) acc += pv(i, j) * (logp(i, j) - logq(i, j));
    out(i, 0) = acc;
  }
  return finish(std::move(out), track({&p, &q}), [p, q, logp, logq](const Matrix& g) {
    const Matrix& pv = p.value();
    const Matrix& qv = q.value();
    if (p.requires_grad()) {
      Matrix gp(pv.rows(), pv.cols());
      for (Index i = 0; i < pv.rows(); ++i) {
        for (Index j = 0; j < pv.cols(); ++j) {
          const double active = pv(i, j) > kProbFloor ? 1.0 : 0.0;
          gp(i, j) = g(i, 0) * (logp(i, j) - logq(i, j) + active);
        }
      }
      push(p, gp);
    }
    if (q.requires_grad()) {
      Matrix gq(qv.rows(), qv.cols());
      for (Index i = 0; i < qv.rows(); ++i) {
        for (Index j = 0; j < qv.cols(); ++j) {
          gq(i, j) = qv(i, j) > kProbFloor ? -g(i, 0) * pv(i, j) / qv(i, j) : 0.0;
        }
      }
      push(q, gq);
    }
  });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  const Matrix& v = a.value();
  for (Index i = 0; i < v.rows(); ++i) {
    for (Index j = 0; j < v.cols(); ++j) acc += v(i, j);
  }
  Matrix out = Matrix::Constant(1, 1, acc);
  return finish(std::move(out), track({&a}), [a](const Matrix& g) {
    push(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ContractError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor stop_gradient(const Tensor& x) {
  if (StopGradientFreeze* freeze = StopGradientFreeze::active()) {
    return Tensor(freeze->intercept(x.value()), false);
  }
  return Tensor(x.value(), false);
}

Tensor element(const Tensor& a, Index i, Index j) {
  if (i < 0 || j < 0 || i >= a.rows() || j >= a.cols()) {
    throw DimensionError("element: index (" + std::to_string(i) + "," + std::to_string(j) +
                         ") outside " + a.shape_string());
  }
  Matrix out = Matrix::Constant(1, 1, a.value()(i, j));
  return finish(std::move(out), track({&a}), [a, i, j](const Matrix& g) {
    Matrix ga = Matrix::Zero(a.rows(), a.cols());
    ga(i, j) = g(0, 0);
    push(a, ga);
  });
}

Tensor first_difference(const Tensor& v) {
  if (v.cols() != 1 || v.rows() < 2) {
    throw DimensionError("first_difference: expected a column with >= 2 entries, got " +
                         v.shape_string());
  }
  const Index n = v.rows();
  Matrix out = v.value().bottomRows(n - 1) - v.value().topRows(n - 1);
  return finish(std::move(out), track({&v}), [v, n](const Matrix& g) {
    Matrix gv = Matrix::Zero(n, 1);
    gv.bottomRows(n - 1) += g;
    gv.topRows(n - 1) -= g;
    push(v, gv);
  });
}

Tensor lag_cosine(const Tensor& period, Index length) {
  require_scalar("lag_cosine", period);
  const double p = period.item();
  constexpr double two_pi = 2.0 * std::numbers::pi;
  Matrix out = Matrix::Zero(length, length);
  for (Index i = 0; i < length; ++i) {
    for (Index j = 0; j <= i; ++j) out(i, j) = std::cos(two_pi * static_cast<double>(i - j) / p);
  }
  return finish(std::move(out), track({&period}), [period, length, p](const Matrix& g) {
    double acc = 0.0;
    for (Index i = 0; i < length; ++i) {
      for (Index j = 0; j <= i; ++j) {
        const double lag = static_cast<double>(i - j);
        acc += g(i, j) * std::sin(two_pi * lag / p) * two_pi * lag / (p * p);
      }
    }
    push(period, Matrix::Constant(1, 1, acc));
  });
}

Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw ContractError("dropout: rate must be in [0, 1)");
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix m(a.rows(), a.cols());
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  return mul(a, Tensor(std::move(m), false));
}

}  // namespace pit
