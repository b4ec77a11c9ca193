// SPDX-License-Identifier: Apache-2.0
//
// Inference pipeline. For every stride-1 window:
//
//   r_i      mean over channels of (x - x_hat)^2
//   delta_i  T / (layers * heads) * sum KL(S_i || P_i) + KL(P_i || S_i)
//   w        softmax(-delta) over the window
//   e_i      w_i * r_i
//
// The per-window streams are projected onto the global timeline, robustly
// normalized against calibration statistics, fused with a pointwise max and
// thresholded at a percentile of the calibration scores.
#pragma once

#include "pit/data.hpp"
#include "pit/error.hpp"
#include "pit/model.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

namespace pit {

inline constexpr double kIqrFloor = 1e-8;

template <typename Scalar>
using ColumnOf = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// exp(-delta_i) / sum_j exp(-delta_j), stabilized by the minimum delta.
template <typename Derived>
ColumnOf<typename Derived::Scalar> alignment_weights(const Eigen::MatrixBase<Derived>& delta) {
  using S = typename Derived::Scalar;
  const S lo = delta.minCoeff();
  ColumnOf<S> w = (-(delta.array() - lo)).exp().matrix();
  S total = S(0);
  for (Index i = 0; i < w.size(); ++i) total += w(i);
  return w / total;
}

template <typename DerivedW, typename DerivedR>
ColumnOf<typename DerivedW::Scalar> energy(const Eigen::MatrixBase<DerivedW>& w,
                                           const Eigen::MatrixBase<DerivedR>& r) {
  return w.cwiseProduct(r);
}

template <typename DerivedA, typename DerivedB>
ColumnOf<typename DerivedA::Scalar> fuse(const Eigen::MatrixBase<DerivedA>& e_norm,
                                         const Eigen::MatrixBase<DerivedB>& d_norm) {
  return e_norm.cwiseMax(d_norm);
}

// Linear interpolation between order statistics: rank q/100 * (n - 1).
template <typename Derived>
typename Derived::Scalar percentile(const Eigen::MatrixBase<Derived>& values, double q) {
  using S = typename Derived::Scalar;
  const Index n = values.size();
  if (n == 0) throw ContractError("percentile: empty input");
  const ColumnOf<S> flat = values.reshaped();
  std::vector<S> sorted(flat.data(), flat.data() + n);
  std::sort(sorted.begin(), sorted.end());
  const double rank = std::clamp(q, 0.0, 100.0) / 100.0 * double(n - 1);
  const Index lo = static_cast<Index>(std::floor(rank));
  const Index hi = std::min(lo + 1, n - 1);
  const S frac = S(rank - double(lo));
  return sorted[std::size_t(lo)] + frac * (sorted[std::size_t(hi)] - sorted[std::size_t(lo)]);
}

struct RobustStats {
  double median = 0.0;
  double iqr = 1.0;
  bool floored = false;  // raw IQR was below kIqrFloor
};

template <typename Derived>
RobustStats robust_stats(const Eigen::MatrixBase<Derived>& values) {
  RobustStats s;
  s.median = double(percentile(values, 50.0));
  const double iqr = double(percentile(values, 75.0) - percentile(values, 25.0));
  s.floored = !(iqr >= kIqrFloor);
  s.iqr = s.floored ? kIqrFloor : iqr;
  return s;
}

// max(0, (x - median) / iqr).
template <typename Derived>
ColumnOf<typename Derived::Scalar> robust_normalize(const Eigen::MatrixBase<Derived>& x,
                                                    const RobustStats& stats) {
  using S = typename Derived::Scalar;
  return ((x.array() - S(stats.median)) / S(stats.iqr)).cwiseMax(S(0)).matrix();
}

struct NormStats {
  RobustStats energy;
  RobustStats mismatch;
};

// Per-row symmetric KL averaged over layers and heads, times temperature.
Vector mismatch_delta(const AttentionStack& attn, double temperature);

struct WindowStreams {
  Vector r;
  Vector delta;
  Vector w;
  Vector e;
};

// For the no_phase variant the mismatch stream is inert: delta is zero and w uniform.
WindowStreams window_streams(const PiTransformer& model, const Matrix& window, double temperature);

enum class Projection {
  kEndAnchored,   // index t from the window ending at t (first window for t < L - 1)
  kMeanCovering,  // mean over every window covering t
};

// per_window[k] is the stream of window k (covering rows k .. k + L - 1).
Vector project_to_timeline(const std::vector<Vector>& per_window, Index series_length,
                           Index window_length, Projection mode = Projection::kEndAnchored);

struct ScoringConfig {
  double temperature = 10.0;
  double anomaly_ratio = 1.0;  // percent
  Projection projection = Projection::kEndAnchored;

  void validate() const;
};

// Raw r, delta, w, e on the global timeline of a standardized series.
struct TimelineStreams {
  Vector r;
  Vector delta;
  Vector w;
  Vector e;
};

TimelineStreams timeline_streams(const PiTransformer& model, const Series& standardized,
                                 const ScoringConfig& cfg);

struct ScoreSeries {
  Vector r;
  Vector delta;
  Vector w;
  Vector e;
  Vector e_norm;
  Vector d_norm;
  Vector f;
  Labels y_hat;
  double threshold = 0.0;
};

struct Calibration {
  NormStats norm;
  double threshold = 0.0;
};

// Robust statistics from the pooled calibration streams, then the
// (100 - anomaly_ratio) percentile of the pooled fused scores.
Calibration calibrate(const PiTransformer& model, const Series& train_part,
                      const Series& threshold_part, const ScoringConfig& cfg);

struct ThresholdResult {
  double threshold = 0.0;
  Labels labels;
};

// threshold = (100 - ratio) percentile of pooled calibration scores; labels
// are f_test > threshold.
ThresholdResult threshold_and_label(const Vector& f_train, const Vector& f_threshold,
                                    const Vector& f_test, double anomaly_ratio);

Labels label_scores(const Vector& f, double threshold);

// Every maximal run of ground-truth positives containing at least one
// predicted positive becomes fully positive.
Labels point_adjust(const Labels& predicted, const Labels& truth);

// Full pipeline on a standardized series.
ScoreSeries score_series(const PiTransformer& model, const Series& standardized,
                         const ScoringConfig& cfg, const Calibration& calibration);

// Columns t, r, delta, w, e, e_norm, d_norm, f, y_hat and, when truth is
// non-null, y_true.
void write_score_csv(const std::filesystem::path& path, const ScoreSeries& scores,
                     const Labels* truth = nullptr);

}  // namespace pit
