// SPDX-License-Identifier: Apache-2.0
#include "pit/scoring.hpp"

#include "pit/ops.hpp"

#include <charconv>
#include <fstream>

namespace pit {

void ScoringConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("score.temperature must be positive");
  if (!(anomaly_ratio > 0.0 && anomaly_ratio < 100.0)) {
    throw ConfigError("score.anomaly_ratio must be in (0, 100)");
  }
}

Vector mismatch_delta(const AttentionStack& attn, double temperature) {
  if (attn.series.empty() || attn.series.front().empty()) {
    throw ContractError("mismatch_delta: empty attention stack");
  }
  const Index length = attn.series.front().front().rows();
  Vector total = Vector::Zero(length);
  std::size_t count = 0;
  for (std::size_t l = 0; l < attn.series.size(); ++l) {
    for (std::size_t h = 0; h < attn.series[l].size(); ++h) {
      const Tensor& s = attn.series[l][h];
      const Tensor& p = attn.prior.at(l).at(h);
      total += kl_div_rows(s, p).value().col(0);
      total += kl_div_rows(p, s).value().col(0);
      ++count;
    }
  }
  return total * (temperature / double(count));
}

WindowStreams window_streams(const PiTransformer& model, const Matrix& window, double temperature) {
  const ReconOutput out = model.forward(window);
  WindowStreams s;
  s.r = (window - out.recon.value()).array().square().rowwise().mean().matrix();
  if (model.config().prior_mode == PriorMode::kNoPhase) {
    s.delta = Vector::Zero(window.rows());
  } else {
    s.delta = mismatch_delta(out.attn, temperature);
  }
  s.w = alignment_weights(s.delta);
  s.e = energy(s.w, s.r);
  return s;
}

Vector project_to_timeline(const std::vector<Vector>& per_window, Index series_length,
                           Index window_length, Projection mode) {
  if (series_length < window_length) {
    throw ContractError("project_to_timeline: series of length " + std::to_string(series_length) +
                        " is shorter than the window length " + std::to_string(window_length));
  }
  const Index count = series_length - window_length + 1;
  if (Index(per_window.size()) != count) {
    throw DimensionError("project_to_timeline: expected " + std::to_string(count) +
                         " windows, got " + std::to_string(per_window.size()));
  }
  for (const Vector& v : per_window) {
    if (v.size() != window_length) {
      throw DimensionError("project_to_timeline: window stream of length " +
                           std::to_string(v.size()) + ", expected " +
                           std::to_string(window_length));
    }
  }
  Vector out(series_length);
  if (mode == Projection::kEndAnchored) {
    for (Index t = 0; t < window_length - 1; ++t) out(t) = per_window.front()(t);
    for (Index t = window_length - 1; t < series_length; ++t) {
      out(t) = per_window[std::size_t(t - window_length + 1)](window_length - 1);
    }
    return out;
  }
  out.setZero();
  Vector covering = Vector::Zero(series_length);
  for (Index k = 0; k < count; ++k) {
    out.segment(k, window_length) += per_window[std::size_t(k)];
    covering.segment(k, window_length).array() += 1.0;
  }
  return out.cwiseQuotient(covering);
}

TimelineStreams timeline_streams(const PiTransformer& model, const Series& standardized,
                                 const ScoringConfig& cfg) {
  const Index L = model.config().window_length;
  const Index count = window_count(standardized.rows(), L);
  std::vector<Vector> r, delta, w, e;
  r.reserve(std::size_t(count));
  delta.reserve(std::size_t(count));
  w.reserve(std::size_t(count));
  e.reserve(std::size_t(count));
  for (Index k = 0; k < count; ++k) {
    WindowStreams s = window_streams(model, window_view(standardized, k, L), cfg.temperature);
    r.push_back(std::move(s.r));
    delta.push_back(std::move(s.delta));
    w.push_back(std::move(s.w));
    e.push_back(std::move(s.e));
  }
  const Index n = standardized.rows();
  return TimelineStreams{project_to_timeline(r, n, L, cfg.projection),
                         project_to_timeline(delta, n, L, cfg.projection),
                         project_to_timeline(w, n, L, cfg.projection),
                         project_to_timeline(e, n, L, cfg.projection)};
}

namespace {

Vector concat(const Vector& a, const Vector& b) {
  Vector out(a.size() + b.size());
  out << a, b;
  return out;
}

Vector fused(const TimelineStreams& s, const NormStats& norm) {
  return fuse(robust_normalize(s.e, norm.energy), robust_normalize(s.delta, norm.mismatch));
}

}  // namespace

Calibration calibrate(const PiTransformer& model, const Series& train_part,
                      const Series& threshold_part, const ScoringConfig& cfg) {
  cfg.validate();
  const TimelineStreams train_streams = timeline_streams(model, train_part, cfg);
  const TimelineStreams thresh_streams = timeline_streams(model, threshold_part, cfg);
  Calibration cal;
  cal.norm.energy = robust_stats(concat(train_streams.e, thresh_streams.e));
  cal.norm.mismatch = robust_stats(concat(train_streams.delta, thresh_streams.delta));
  const Vector pooled = concat(fused(train_streams, cal.norm), fused(thresh_streams, cal.norm));
  cal.threshold = percentile(pooled, 100.0 - cfg.anomaly_ratio);
  return cal;
}

Labels label_scores(const Vector& f, double threshold) {
  Labels out(std::size_t(f.size()), 0);
  for (Index i = 0; i < f.size(); ++i) out[std::size_t(i)] = f(i) > threshold ? 1 : 0;
  return out;
}

ThresholdResult threshold_and_label(const Vector& f_train, const Vector& f_threshold,
                                    const Vector& f_test, double anomaly_ratio) {
  if (!(anomaly_ratio > 0.0 && anomaly_ratio < 100.0)) {
    throw ContractError("threshold_and_label: anomaly ratio must be in (0, 100)");
  }
  const Vector pooled = concat(f_train, f_threshold);
  if (pooled.size() == 0) throw ContractError("threshold_and_label: no calibration scores");
  ThresholdResult out;
  out.threshold = percentile(pooled, 100.0 - anomaly_ratio);
  out.labels = label_scores(f_test, out.threshold);
  return out;
}

Labels point_adjust(const Labels& predicted, const Labels& truth) {
  if (predicted.size() != truth.size()) {
    throw DimensionError("point_adjust: " + std::to_string(predicted.size()) +
                         " predictions for " + std::to_string(truth.size()) + " labels");
  }
  Labels out = predicted;
  std::size_t i = 0;
  while (i < truth.size()) {
    if (!truth[i]) {
      ++i;
      continue;
    }
    std::size_t end = i;
    bool hit = false;
    for (; end < truth.size() && truth[end]; ++end) hit = hit || predicted[end] != 0;
    if (hit) std::fill(out.begin() + std::ptrdiff_t(i), out.begin() + std::ptrdiff_t(end), 1);
    i = end;
  }
  return out;
}

ScoreSeries score_series(const PiTransformer& model, const Series& standardized,
                         const ScoringConfig& cfg, const Calibration& calibration) {
  cfg.validate();
  TimelineStreams s = timeline_streams(model, standardized, cfg);
  ScoreSeries out;
  out.e_norm = robust_normalize(s.e, calibration.norm.energy);
  out.d_norm = robust_normalize(s.delta, calibration.norm.mismatch);
  out.f = fuse(out.e_norm, out.d_norm);
  out.y_hat = label_scores(out.f, calibration.threshold);
  out.threshold = calibration.threshold;
  out.r = std::move(s.r);
  out.delta = std::move(s.delta);
  out.w = std::move(s.w);
  out.e = std::move(s.e);
  return out;
}

namespace {

std::string number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

void write_score_csv(const std::filesystem::path& path, const ScoreSeries& s,
                     const Labels* truth) {
  if (truth != nullptr && Index(truth->size()) != s.f.size()) {
    throw DimensionError("write_score_csv: " + std::to_string(truth->size()) + " labels for " +
                         std::to_string(s.f.size()) + " scores");
  }
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << "t,r,delta,w,e,e_norm,d_norm,f,y_hat" << (truth ? ",y_true" : "") << '\n';
  for (Index t = 0; t < s.f.size(); ++t) {
    out << t << ',' << number(s.r(t)) << ',' << number(s.delta(t)) << ',' << number(s.w(t)) << ','
        << number(s.e(t)) << ',' << number(s.e_norm(t)) << ',' << number(s.d_norm(t)) << ','
        << number(s.f(t)) << ',' << int(s.y_hat[std::size_t(t)]);
    if (truth) out << ',' << int((*truth)[std::size_t(t)]);
    out << '\n';
  }
}

}  // namespace pit
