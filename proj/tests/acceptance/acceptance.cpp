// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.
#include "gradcheck.hpp"
#include "op_cases.hpp"

#include "pit/checkpoint.hpp"
#include "pit/eval.hpp"
#include "pit/synth.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace pit {
namespace {

using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kSeeds[] = {1, 2, 3};
constexpr Index kLength = 4000;
constexpr Index kChannels = 3;
constexpr Index kPointIndex = 600;
constexpr Index kSeasonalOnset = 2600;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

RunConfig acceptance_config(std::uint64_t seed) {
  RunConfig cfg;
  cfg.model.window_length = 16;
  cfg.model.channels = kChannels;
  cfg.model.model_dim = 32;
  cfg.model.num_layers = 2;
  cfg.model.num_heads = 4;
  cfg.model.feedforward_dim = 64;
  cfg.model.seed = seed;
  cfg.train.batch_size = 32;
  cfg.train.learning_rate = 1e-3;
  cfg.train.max_epochs = 2;
  cfg.train.patience = 4;
  cfg.train.k = 0.03;
  cfg.train.average_kl = true;
  cfg.train.seed = seed;
  cfg.scoring.temperature = 0.1;
  cfg.scoring.anomaly_ratio = 0.2;
  return cfg;
}

SyntheticSpec suite_spec(std::uint64_t seed, std::vector<AnomalySegment> segments) {
  SyntheticSpec spec;
  spec.length = kLength;
  spec.channels = kChannels;
  spec.seed = seed;
  spec.segments = std::move(segments);
  return spec;
}

AnomalySegment point_segment() { return {AnomalyType::kPoint, kPointIndex, 1, 30.0, 0}; }
AnomalySegment seasonal_segment(Index start) { return {AnomalyType::kSeasonal, start, 100, 1.0, 0}; }

std::vector<AnomalySegment> five_types() {
  return {point_segment(),
          {AnomalyType::kContextual, 1200, 50, 8.0, 1},
          {AnomalyType::kCollective, 1900, 50, 3.0, 0},
          seasonal_segment(kSeasonalOnset),
          {AnomalyType::kTrend, 3300, 100, 20.0, 0}};
}

RawDataset as_dataset(const SyntheticData& d) { return {d.train, d.test, d.labels, {}}; }

// 1. Finite-difference checks of every operation and both pass objectives.
Outcome gradient_suite() {
  Outcome o;
  const auto t0 = Clock::now();
  Index checked = 0;
  for (const testing::OpCase& c : testing::op_gradient_cases()) {
    const testing::GradCheckResult r = c.run();
    o.require(r.max_relative_error < 1e-4, c.name + " error " + fmt("%.2e", r.max_relative_error));
    ++checked;
  }
  TrainConfig cfg;
  cfg.k = 3.0;
  const Matrix window = testing::random_matrix(16, 3, 21);
  for (Pass pass : {Pass::kFirst, Pass::kSecond}) {
    PiTransformer model(testing::tiny_model_config());
    const testing::GradCheckResult r = testing::check_pass_gradients(model, window, cfg, pass);
    const std::string name = pass == Pass::kFirst ? "L1" : "L2";
    o.require(r.global_relative_error < 1e-4, name + " error " + fmt("%.2e", r.global_relative_error));
    o.require(r.max_absolute_error < 1e-6, name + " absolute error " + fmt("%.2e", r.max_absolute_error));
    ++checked;
  }
  const double elapsed = seconds_since(t0);
  o.require(elapsed < 60.0, "runtime " + fmt("%.1fs", elapsed));
  if (o.pass) o.detail = std::to_string(checked) + " checks in " + fmt("%.1fs", elapsed);
  return o;
}

bool is_causal_stochastic(const Matrix& a, double tol, double* worst) {
  bool ok = true;
  for (Index i = 0; i < a.rows(); ++i) {
    *worst = std::max(*worst, std::abs(a.row(i).sum() - 1.0));
    ok = ok && std::abs(a.row(i).sum() - 1.0) <= tol;
    for (Index j = i + 1; j < a.cols(); ++j) ok = ok && a(i, j) == 0.0;
  }
  return ok;
}

// 2. Row-stochasticity, causality, weight normalization and non-negative
// mismatch over random windows.
Outcome distribution_invariants() {
  Outcome o;
  std::vector<PiTransformer> models;
  for (PriorMode mode : {PriorMode::kFull, PriorMode::kSingleHead, PriorMode::kNoPhase}) {
    ModelConfig mc = acceptance_config(7).model;
    mc.prior_mode = mode;
    models.emplace_back(mc);
  }
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  double worst_row = 0.0, worst_w = 0.0, forced = 0.0;
  Index bad_rows = 0, bad_w = 0, negative = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const PiTransformer& model = models[std::size_t(trial % 3)];
    const Matrix window = scale(rng) * testing::random_matrix(16, kChannels, 1000 + std::uint64_t(trial));
    const ReconOutput out = model.forward(window);
    for (std::size_t l = 0; l < out.attn.num_layers(); ++l) {
      for (std::size_t h = 0; h < out.attn.num_heads(); ++h) {
        bad_rows += !is_causal_stochastic(out.attn.series[l][h].value(), 1e-6, &worst_row);
        bad_rows += !is_causal_stochastic(out.attn.prior[l][h].value(), 1e-6, &worst_row);
      }
    }
    const WindowStreams s = window_streams(model, window, 0.1);
    worst_w = std::max(worst_w, std::abs(s.w.sum() - 1.0));
    bad_w += std::abs(s.w.sum() - 1.0) > 1e-9;
    negative += (s.delta.array() < 0.0).count();
    AttentionStack same = out.attn;
    same.prior = same.series;
    forced = std::max(forced, mismatch_delta(same, 10.0).cwiseAbs().maxCoeff());
  }
  o.require(bad_rows == 0, std::to_string(bad_rows) + " attention matrices off the simplex or non-causal");
  o.require(bad_w == 0, std::to_string(bad_w) + " windows with sum(w) off by " + fmt("%.2e", worst_w));
  o.require(negative == 0, std::to_string(negative) + " negative delta entries");
  o.require(forced == 0.0, "delta with S = P is " + fmt("%.2e", forced));
  if (o.pass) {
    o.detail = "1000 windows, max row error " + fmt("%.1e", worst_row) + ", max |sum w - 1| " +
               fmt("%.1e", worst_w);
  }
  return o;
}

// 3. Each pass's divergence reaches only its own pathway.
Outcome stop_gradient_asymmetry() {
  Outcome o;
  for (PriorMode mode : {PriorMode::kFull, PriorMode::kSingleHead}) {
    PiTransformer model(testing::tiny_model_config(mode));
    const Matrix window = testing::random_matrix(16, 3, 22);
    for (KlFrozen frozen : {KlFrozen::kPrior, KlFrozen::kSeries}) {
      model.zero_grad();
      for (Parameter& p : model.parameters()) p.tensor.set_requires_grad(true);
      {
        Tape tape;
        Tape::Scope scope(tape);
        tape.backward(loss_sym_kl(model.forward(window).attn, frozen));
      }
      double own = 0.0, other = 0.0;
      for (const Parameter& p : model.parameters()) {
        const bool frozen_side = (frozen == KlFrozen::kPrior) == p.prior;
        (frozen_side ? other : own) += p.tensor.grad().cwiseAbs().sum();
      }
      const std::string name = to_string(mode) + (frozen == KlFrozen::kPrior ? " pass 1" : " pass 2");
      o.require(other == 0.0, name + " leaks " + fmt("%.2e", other));
      o.require(own > 0.0, name + " has no gradient on its own pathway");
    }
  }
  if (o.pass) o.detail = "frozen-side gradients exactly 0";
  return o;
}

// 4. Closed-form fixtures.
Outcome fixtures() {
  Outcome o;
  const Vector w = alignment_weights(Vector{{0.0, std::log(2.0)}});
  o.require(std::abs(w(0) - 2.0 / 3.0) <= 1e-12 && std::abs(w(1) - 1.0 / 3.0) <= 1e-12,
            "alignment weights " + fmt("%.15f", w(0)));
  Vector values(9);
  for (Index i = 0; i < 9; ++i) values(i) = double(i + 1);
  const RobustStats stats = robust_stats(values);
  const Vector probe{{stats.median, stats.median + stats.iqr}};
  const Vector n = robust_normalize(probe, stats);
  o.require(n(0) == 0.0 && n(1) == 1.0, "robust_normalize gives " + fmt("%.17g", n(1)));
  const Matrix a = testing::random_matrix(200, 1, 31);
  const Matrix b = testing::random_matrix(200, 1, 32);
  const Vector f = fuse(Vector(a.col(0)), Vector(b.col(0)));
  bool max_ok = true;
  for (Index i = 0; i < f.size(); ++i) max_ok = max_ok && f(i) == std::max(a(i, 0), b(i, 0));
  o.require(max_ok, "fuse is not the pointwise max");
  const double f1 = f1_score(97.37, 98.80);
  o.require(std::abs(f1 - 98.08) <= 0.01, "F1 " + fmt("%.4f", f1));
  if (o.pass) o.detail = "F1(97.37, 98.80) = " + fmt("%.4f", f1);
  return o;
}

Labels brute_force_adjust(const Labels& pred, const Labels& truth) {
  Labels out = pred;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!truth[i]) continue;
    std::size_t lo = i, hi = i;
    while (lo > 0 && truth[lo - 1]) --lo;
    while (hi + 1 < truth.size() && truth[hi + 1]) ++hi;
    bool hit = false;
    for (std::size_t j = lo; j <= hi; ++j) hit = hit || pred[j];
    if (hit) out[i] = 1;
  }
  return out;
}

// 5. Point adjustment against a segment scan.
Outcome point_adjust_oracle() {
  Outcome o;
  std::mt19937_64 rng(41);
  std::uniform_int_distribution<std::size_t> len(1, 200);
  std::uniform_real_distribution<double> density(0.05, 0.6);
  Index mismatches = 0, unstable = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = len(rng);
    std::bernoulli_distribution yt(density(rng)), yp(density(rng));
    Labels truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = yt(rng);
      pred[i] = yp(rng);
    }
    const Labels adjusted = point_adjust(pred, truth);
    mismatches += adjusted != brute_force_adjust(pred, truth);
    unstable += point_adjust(adjusted, truth) != adjusted;
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " of 500 differ from the scan");
  o.require(unstable == 0, std::to_string(unstable) + " of 500 not idempotent");
  if (o.pass) o.detail = "500 cases exact, idempotent";
  return o;
}

struct SeedRun {
  std::uint64_t seed = 0;
  RunConfig cfg;
  PipelineResult result;
  Labels labels;
};

// 6. Five anomaly types under one global threshold.
Outcome synthetic_end_to_end(std::vector<SeedRun>& runs) {
  Outcome o;
  const auto t0 = Clock::now();
  std::string f1s;
  for (std::uint64_t seed : kSeeds) {
    const RunConfig cfg = acceptance_config(seed);
    const SyntheticData d = synth_generate(suite_spec(seed, five_types()));
    SeedRun run{seed, cfg, run_pipeline(as_dataset(d), cfg), d.labels};
    const double f1 = run.result.report.f1;
    const Index found = detected_segments(run.result.scores.y_hat, d.labels);
    f1s += (f1s.empty() ? "" : ", ") + fmt("%.2f", f1);
    o.require(f1 >= 90.0, "seed " + std::to_string(seed) + " F1 " + fmt("%.2f", f1));
    o.require(found == 5, "seed " + std::to_string(seed) + " found " + std::to_string(found) + "/5");
    runs.push_back(std::move(run));
  }
  const double elapsed = seconds_since(t0);
  o.require(elapsed < 600.0, "runtime " + fmt("%.0fs", elapsed));
  o.detail = "F1 " + f1s + ", " + fmt("%.0fs", elapsed) + (o.pass ? "" : "; " + o.detail);
  return o;
}

// 7. Mismatch response at a phase shift and Energy location of a point spike.
Outcome mechanism(const std::vector<SeedRun>& runs) {
  Outcome o;
  std::string summary;
  for (const SeedRun& run : runs) {
    const Index L = run.cfg.model.window_length;
    const Checkpoint& ck = run.result.training.checkpoint;
    const std::string tag = "seed " + std::to_string(run.seed);

    const SyntheticData seasonal = synth_generate(suite_spec(run.seed, {seasonal_segment(2000)}));
    const ScoreSeries s = score_checkpoint(ck, run.cfg, run.result.calibration, seasonal.test);
    double onset_max = 0.0;
    for (Index t = 2000 - L; t <= 2000 + L; ++t) onset_max = std::max(onset_max, s.d_norm(t));
    std::vector<double> nominal;
    for (Index t = 0; t < kLength; ++t) {
      if (t < 2000 - L || t >= 2100 + L) nominal.push_back(s.d_norm(t));
    }
    const Vector nv = Eigen::Map<const Vector>(nominal.data(), Index(nominal.size()));
    const double median = percentile(nv, 50.0);
    const double p99 = percentile(nv, 99.0);
    o.require(onset_max > 0.0 && onset_max >= 5.0 * median,
              tag + " onset max " + fmt("%.3g", onset_max) + " vs median " + fmt("%.3g", median));

    const SyntheticData point = synth_generate(suite_spec(run.seed, {point_segment()}));
    const ScoreSeries p = score_checkpoint(ck, run.cfg, run.result.calibration, point.test);
    Index argmax = 0;
    p.e.maxCoeff(&argmax);
    o.require(std::abs(argmax - kPointIndex) <= L, tag + " energy argmax at " + std::to_string(argmax));

    summary += (summary.empty() ? "" : "; ") + tag + ": onset d " + fmt("%.3g", onset_max) +
               " median " + fmt("%.3g", median) + " p99 " + fmt("%.3g", p99) + ", argmax e " +
               std::to_string(argmax);
  }
  o.detail = summary + (o.pass ? "" : "; failed: " + o.detail);
  return o;
}

// 8. Prior variants on the seasonal plus trend suite.
Outcome ablation_direction() {
  Outcome o;
  std::string summary;
  for (std::uint64_t seed : kSeeds) {
    const SyntheticData d = synth_generate(suite_spec(
        seed, {seasonal_segment(1300), {AnomalyType::kTrend, 2700, 100, 20.0, 0}}));
    AblationSpec spec;
    spec.axis = AblationAxis::kPhaseSync;
    spec.values = {"full", "no_phase", "single_head"};
    const std::vector<AblationCell> cells = run_ablation(spec, acceptance_config(seed), as_dataset(d));
    for (const AblationCell& c : cells) o.require(c.ok, c.value + " failed: " + c.error);
    const double full = cells[0].report.f1, none = cells[1].report.f1, single = cells[2].report.f1;
    const std::string tag = "seed " + std::to_string(seed);
    o.require(none < full, tag + " no_phase " + fmt("%.2f", none) + " >= full " + fmt("%.2f", full));
    const bool between = single <= full && single >= none;
    o.require(between || std::abs(single - full) <= 2.0,
              tag + " single_head " + fmt("%.2f", single) + " outside range");
    summary += (summary.empty() ? "" : "; ") + tag + " full/no_phase/single_head " + fmt("%.2f", full) +
               "/" + fmt("%.2f", none) + "/" + fmt("%.2f", single);
  }
  o.detail = summary + (o.pass ? "" : "; failed: " + o.detail);
  return o;
}

bool same_bits(const Vector& a, const Vector& b) {
  return a.size() == b.size() &&
         std::equal(a.data(), a.data() + a.size(), b.data(),
                    [](double x, double y) { return std::memcmp(&x, &y, sizeof x) == 0; });
}

// 9. Reproducible training logs and checkpoint round trip.
Outcome determinism(const std::vector<SeedRun>& runs) {
  Outcome o;
  RunConfig cfg = acceptance_config(5);
  cfg.train.max_epochs = 1;
  cfg.train.max_batches_per_epoch = 20;
  const SyntheticData d = synth_generate(suite_spec(5, {point_segment()}));
  std::ostringstream first, second;
  write_training_log(first, train(d.train, cfg.model, cfg.train).log);
  write_training_log(second, train(d.train, cfg.model, cfg.train).log);
  o.require(!first.str().empty() && first.str() == second.str(), "training logs differ");

  const SeedRun& run = runs.front();
  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / "pit_acceptance_roundtrip.ckpt";
  save_checkpoint(path, run.result.training.checkpoint, run.cfg, &run.result.calibration);
  const SavedRun loaded = load_checkpoint(path);
  std::filesystem::remove(path);
  o.require(loaded.calibration.has_value(), "calibration missing after load");
  if (loaded.calibration) {
    const SyntheticData suite = synth_generate(suite_spec(run.seed, five_types()));
    const ScoreSeries again = score_checkpoint(loaded.checkpoint, loaded.config, *loaded.calibration, suite.test);
    o.require(same_bits(again.f, run.result.scores.f), "reloaded f-stream differs");
  }
  if (o.pass) o.detail = "log " + std::to_string(first.str().size()) + " bytes identical, f bitwise equal";
  return o;
}

Vector white_noise(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

// 10. Rescaled-range estimator on white noise.
Outcome hurst() {
  Outcome o;
  double lo = 1.0, hi = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const double h = estimate_hurst_rs(white_noise(4096, seed)).value;
    lo = std::min(lo, h);
    hi = std::max(hi, h);
    o.require(std::abs(h - 0.5) <= 0.1, "seed " + std::to_string(seed) + " H " + fmt("%.3f", h));
  }
  const Vector x = white_noise(4096, 21);
  const double h = estimate_hurst_rs(x).value;
  for (double c : {0.125, 0.5, 2.0, 1024.0}) {
    o.require(estimate_hurst_rs(c * x).value == h, "scale " + fmt("%g", c) + " changes H");
  }
  double drift = 0.0;
  for (double c : {0.3, 3.7, 1e6}) drift = std::max(drift, std::abs(estimate_hurst_rs(c * x).value - h));
  o.require(drift <= 1e-12, "non-dyadic scale drift " + fmt("%.1e", drift));
  if (o.pass) {
    o.detail = "H in [" + fmt("%.3f", lo) + ", " + fmt("%.3f", hi) +
               "], dyadic scales exact, other scales within " + fmt("%.1e", drift);
  }
  return o;
}

}  // namespace
}  // namespace pit

int main() {
  using namespace pit;
  int failed = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << "  " << name << ": " << o.detail << std::endl;
  };
  std::vector<SeedRun> runs;
  report(1, "gradient suite", gradient_suite);
  report(2, "distribution invariants", distribution_invariants);
  report(3, "stop-gradient asymmetry", stop_gradient_asymmetry);
  report(4, "fixtures", fixtures);
  report(5, "point-adjust oracle", point_adjust_oracle);
  report(6, "synthetic end-to-end", [&] { return synthetic_end_to_end(runs); });
  report(7, "mechanism", [&] {
    if (runs.size() != std::size(kSeeds)) return Outcome{false, "needs the end-to-end runs"};
    return mechanism(runs);
  });
  report(8, "ablation direction", ablation_direction);
  report(9, "determinism and persistence", [&] {
    if (runs.empty()) return Outcome{false, "needs the end-to-end runs"};
    return determinism(runs);
  });
  report(10, "hurst estimator", hurst);
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
