// SPDX-License-Identifier: Apache-2.0
#include "op_cases.hpp"

#include "pit/error.hpp"
#include "pit/ops.hpp"
#include "pit/optim.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

namespace pit {
namespace {

Matrix m22(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

Tensor row(std::initializer_list<double> values) {
  Matrix m(1, Index(values.size()));
  Index j = 0;
  for (double v : values) m(0, j++) = v;
  return Tensor(m);
}

TEST(Matmul, HandExpandedProduct) {
  const Tensor c = matmul(Tensor(m22(1, 2, 3, 4)), Tensor(m22(5, 6, 7, 8)));
  EXPECT_EQ(c.value(), m22(19, 22, 43, 50));
}

TEST(Matmul, IdentityAndZero) {
  const Matrix b = m22(1, 2, 3, 4);
  EXPECT_EQ(matmul(Tensor(Matrix::Identity(2, 2)), Tensor(b)).value(), b);
  EXPECT_EQ(matmul(Tensor(Matrix::Zero(2, 2)), Tensor(b)).value(), Matrix::Zero(2, 2));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor(Matrix::Zero(2, 3)), Tensor(Matrix::Zero(2, 3)));
    FAIL();
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
  }
}

TEST(Softmax, TwoEntryRow) {
  Matrix logits = Matrix::Zero(2, 2);
  logits(1, 1) = std::log(2.0);
  const Matrix s = causal_softmax_rows(Tensor(logits)).value();
  EXPECT_NEAR(s(1, 0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(s(1, 1), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(s(0, 0), 1.0);
  EXPECT_EQ(s(0, 1), 0.0);
}

TEST(Softmax, EqualLogitsAreUniformOverThePast) {
  const Matrix s = causal_softmax_rows(Tensor(Matrix::Constant(6, 6, 3.0))).value();
  for (Index j = 0; j <= 2; ++j) EXPECT_NEAR(s(2, j), 1.0 / 3.0, 1e-15);
  for (Index j = 3; j < 6; ++j) EXPECT_EQ(s(2, j), 0.0);
}

TEST(Softmax, RowsSumToOneWithExactMaskedZeros) {
  const Matrix s = causal_softmax_rows(Tensor(testing::random_matrix(30, 30, 4, -20, 20))).value();
  for (Index i = 0; i < s.rows(); ++i) {
    EXPECT_NEAR(s.row(i).sum(), 1.0, 1e-9);
    for (Index j = i + 1; j < s.cols(); ++j) EXPECT_EQ(s(i, j), 0.0);
  }
}

TEST(Softmax, LargeLogitsStayFinite) {
  const Matrix s = causal_softmax_rows(Tensor(Matrix::Constant(4, 4, 1e300))).value();
  EXPECT_TRUE(s.allFinite());
}

TEST(Softmax, FullyMaskedRowIsRejected) {
  Mask mask = causal_mask(3);
  mask(2, 0) = mask(2, 1) = mask(2, 2) = false;
  EXPECT_THROW(masked_softmax_rows(Tensor(Matrix::Zero(3, 3)), mask), ContractError);
}

TEST(KlDivRows, PointMassAgainstUniform) {
  const Tensor kl = kl_div_rows(row({1.0, 0.0}), row({0.5, 0.5}));
  EXPECT_NEAR(kl.value()(0, 0), std::log(2.0), 1e-10);
}

TEST(KlDivRows, SymmetricPairFixture) {
  const Tensor p = row({0.5, 0.5});
  const Tensor q = row({0.25, 0.75});
  const double forward = kl_div_rows(p, q).value()(0, 0);
  const double reverse = kl_div_rows(q, p).value()(0, 0);
  EXPECT_NEAR(forward, 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0), 1e-15);
  EXPECT_NEAR(forward, 0.1438, 5e-5);
  EXPECT_NEAR(reverse, 0.1308, 5e-5);
  EXPECT_NEAR(forward + reverse, 0.2746, 1e-4);
}

TEST(KlDivRows, IdenticalRowsGiveZeroAndOthersArePositive) {
  const Tensor p = causal_softmax_rows(Tensor(testing::random_matrix(8, 8, 1)));
  const Tensor q = causal_softmax_rows(Tensor(testing::random_matrix(8, 8, 2)));
  EXPECT_EQ(kl_div_rows(p, p).value().cwiseAbs().maxCoeff(), 0.0);
  const Matrix kl = kl_div_rows(p, q).value();
  EXPECT_EQ(kl(0, 0), 0.0);
  for (Index i = 1; i < 8; ++i) EXPECT_GT(kl(i, 0), 0.0);
}

TEST(KlDivRows, UnnormalizedRowIsRejected) {
  EXPECT_THROW(kl_div_rows(row({0.5, 0.6}), row({0.5, 0.5})), NumericError);
}

TEST(StopGradient, ForwardIdentityBackwardZero) {
  Tensor x(testing::random_matrix(2, 3, 7), true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    const Tensor y = stop_gradient(x);
    EXPECT_EQ(y.value(), x.value());
    tape.backward(sum(mul(y, x)));
  }
  EXPECT_EQ(x.grad(), x.value());
}

TEST(StopGradient, LossOnlyThroughStopGradientLeavesZeroGradient) {
  Tensor x(testing::random_matrix(2, 3, 8), true);
  Tensor w(testing::random_matrix(2, 3, 9), true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(sum(mul(stop_gradient(x), w)));
  }
  EXPECT_EQ(x.grad(), Matrix::Zero(2, 3));
  EXPECT_EQ(w.grad(), x.value());
}

TEST(Backward, LinearAndQuadratic) {
  Tensor x(testing::random_matrix(3, 2, 1), true);
  Tensor v = Tensor::scalar(1.75, true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(sum(x));
  }
  EXPECT_EQ(x.grad(), Matrix::Ones(3, 2));
  {
    Tape::Scope scope(tape);
    tape.backward(mean(square(v)));
  }
  EXPECT_EQ(v.grad()(0, 0), 3.5);
}

TEST(Backward, NonScalarLossIsRejected) {
  Tensor x(Matrix::Ones(2, 2), true);
  Tape tape;
  Tape::Scope scope(tape);
  EXPECT_THROW(tape.backward(square(x)), ContractError);
}

TEST(Backward, TapeIsClearedAfterUse) {
  Tensor x(Matrix::Ones(2, 2), true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(sum(square(x)));
  }
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Backward, NoTapeRecordsNothing) {
  Tensor x(Matrix::Ones(2, 2), true);
  Tape tape;
  const Tensor y = square(x);
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_EQ(y.value(), Matrix::Ones(2, 2));
}

class OpGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
  const auto cases = testing::op_gradient_cases();
  const testing::OpCase& c = cases.at(GetParam());
  const testing::GradCheckResult r = c.run();
  EXPECT_LT(r.max_relative_error, 1e-4) << c.name << " (" << r.worst << ")";
  EXPECT_GT(r.entries, 0);
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient,
                         ::testing::Range<std::size_t>(0, testing::op_gradient_cases().size()),
                         [](const ::testing::TestParamInfo<std::size_t>& info) {
                           return testing::op_gradient_cases().at(info.param).name;
                         });

TEST(Determinism, RepeatedEvaluationIsBitIdentical) {
  const Tensor a(testing::random_matrix(17, 9, 1));
  const Tensor b(testing::random_matrix(9, 13, 2));
  const Matrix first = causal_softmax_rows(matmul_nt(matmul(a, b), matmul(a, b))).value();
  const Matrix second = causal_softmax_rows(matmul_nt(matmul(a, b), matmul(a, b))).value();
  EXPECT_EQ(std::memcmp(first.data(), second.data(), sizeof(double) * std::size_t(first.size())), 0);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  std::vector<Tensor> params{Tensor(testing::random_matrix(2, 2, 3), true)};
  const Matrix before = params[0].value();
  OptimizerState state;
  adam_step(state, params);
  EXPECT_EQ(params[0].value(), before);
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, FirstStepMovesBySignTimesLearningRate) {
  std::vector<Tensor> params{Tensor(Matrix::Zero(1, 4), true)};
  Matrix g(1, 4);
  g << 3.0, -0.02, 1e-3, -50.0;
  params[0].accumulate_grad(g);
  OptimizerState state;
  state.learning_rate = 0.01;
  adam_step(state, params);
  for (Index j = 0; j < 4; ++j) {
    const double expected = -state.learning_rate * g(0, j) / (std::abs(g(0, j)) + state.eps);
    EXPECT_NEAR(params[0].value()(0, j), expected, 1e-15);
    EXPECT_NEAR(params[0].value()(0, j), -0.01 * (g(0, j) > 0 ? 1 : -1), 1e-7);
  }
}

TEST(Adam, ConvexQuadraticShrinksMonotonically) {
  // f(x) = x^2 from x = 1; a scalar re-implementation serves as the oracle.
  std::vector<Tensor> params{Tensor::scalar(1.0, true)};
  OptimizerState state;
  state.learning_rate = 0.1;
  double x = 1.0, m = 0.0, v = 0.0;
  double previous = 1.0;
  for (int step = 1; step <= 2; ++step) {
    params[0].zero_grad();
    params[0].accumulate_grad(Matrix::Constant(1, 1, 2.0 * params[0].value()(0, 0)));
    adam_step(state, params);
    const double g = 2.0 * x;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1.0 - std::pow(0.9, step));
    const double vhat = v / (1.0 - std::pow(0.999, step));
    x -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    EXPECT_NEAR(params[0].value()(0, 0), x, 1e-15);
    EXPECT_LT(std::abs(x), previous);
    previous = std::abs(x);
  }
}

TEST(ClipGlobalNorm, UnderThresholdIsUnchanged) {
  std::vector<Tensor> params{Tensor(Matrix::Zero(1, 2), true)};
  params[0].accumulate_grad((Matrix(1, 2) << 0.3, 0.4).finished());
  EXPECT_DOUBLE_EQ(clip_global_norm(params, 1.0), 0.5);
  EXPECT_EQ(params[0].grad(), (Matrix(1, 2) << 0.3, 0.4).finished());
}

TEST(ClipGlobalNorm, OverThresholdScalesEveryEntry) {
  std::vector<Tensor> params{Tensor(Matrix::Zero(1, 2), true), Tensor(Matrix::Zero(2, 1), true)};
  params[0].accumulate_grad((Matrix(1, 2) << 1.2, 0.0).finished());
  params[1].accumulate_grad((Matrix(2, 1) << 0.0, 1.6).finished());
  EXPECT_DOUBLE_EQ(clip_global_norm(params, 1.0), 2.0);
  EXPECT_EQ(params[0].grad(), (Matrix(1, 2) << 0.6, 0.0).finished());
  EXPECT_EQ(params[1].grad(), (Matrix(2, 1) << 0.0, 0.8).finished());
}

TEST(ClipGlobalNorm, ResultingNormIsTheMinimum) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<Tensor> params{Tensor(Matrix::Zero(3, 3), true)};
    params[0].accumulate_grad(testing::random_matrix(3, 3, seed, -2, 2));
    const double before = params[0].grad().norm();
    clip_global_norm(params, 1.5);
    EXPECT_NEAR(params[0].grad().norm(), std::min(before, 1.5), 1e-12);
  }
}

}  // namespace
}  // namespace pit
