// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations on Tensor. Every function computes its forward
// value eagerly and, when a tape is active and any input requires a gradient,
// records the matching vector-Jacobian product. Reductions run left to right
// in row-major order so results are bit-reproducible.
#pragma once

#include "pit/tensor.hpp"

#include <random>

namespace pit {

// Probability floor applied before logarithms in kl_div_rows.
inline constexpr double kProbFloor = 1e-12;
// Row-sum tolerance accepted by kl_div_rows.
inline constexpr double kRowSumTolerance = 1e-6;

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// Elementwise, shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// Broadcasts a 1xN row over every row of a.
Tensor add_row(const Tensor& a, const Tensor& row);
// Multiplies row i of a by v(i); v is a column with a.rows() entries.
Tensor row_scale(const Tensor& a, const Tensor& v);
Tensor scale(const Tensor& a, double factor);
// s is 1x1.
Tensor mul_scalar(const Tensor& s, const Tensor& a);
Tensor add_scalar(const Tensor& a, double c);

Tensor square(const Tensor& a);
Tensor reciprocal(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
// tanh approximation.
Tensor gelu(const Tensor& a);

// Row-wise layer normalization with learned gain and bias (both 1xN).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Row softmax over the entries permitted by mask. The mask may permit only
// j <= i and every row needs at least one permitted entry; masked outputs are
// exactly zero.
Tensor masked_softmax_rows(const Tensor& logits, const Mask& mask);
// masked_softmax_rows with the lower-triangular (j <= i) mask.
Tensor causal_softmax_rows(const Tensor& logits);
// Unmasked row softmax.
Tensor softmax_rows(const Tensor& logits);
Mask causal_mask(Index length);

// Per-row KL(p_i || q_i) as a column vector. Both inputs must have rows that
// sum to one within kRowSumTolerance; entries are floored at kProbFloor
// before the logarithm.
Tensor kl_div_rows(const Tensor& p, const Tensor& q);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Forward identity, backward zero.
Tensor stop_gradient(const Tensor& x);

// 1x1 view of a(i, j).
Tensor element(const Tensor& a, Index i, Index j);

// out(i) = v(i + 1) - v(i) for a column vector v.
Tensor first_difference(const Tensor& v);

// Causal lag kernel cos(2*pi*(i - j) / period) for j <= i, zero above the
// diagonal. period is 1x1.
Tensor lag_cosine(const Tensor& period, Index length);

// Inverted dropout; identity when rate == 0.
Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng);

}  // namespace pit
