// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "pit/data.hpp"
#include "pit/run_config.hpp"
#include "pit/scoring.hpp"
#include "pit/training.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace pit {

// Percent-valued binary metrics with anomaly as the positive class.
struct EvalReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  Index tp = 0, fp = 0, tn = 0, fn = 0;
  bool no_predicted_positives = false;  // precision reported as 0
  double threshold = 0.0;
  std::string fingerprint;
  std::string variant;

  std::string to_json() const;
  std::string to_text() const;
};

// 2PR / (P + R), or 0 when P + R == 0.
double f1_score(double precision, double recall);

EvalReport compute_metrics(const Labels& predicted, const Labels& truth);

struct Segment {
  Index start = 0;
  Index end = 0;  // exclusive
};

// Maximal runs of positive labels.
std::vector<Segment> label_segments(const Labels& labels);

// Number of ground-truth segments with at least one predicted positive.
Index detected_segments(const Labels& predicted, const Labels& truth);

struct ChannelContribution {
  Vector mean;      // per channel mean of (x - x_hat)^2
  Vector variance;  // per channel population variance of (x - x_hat)^2
  std::vector<Index> ranking;  // channels by decreasing mean, ties by index
};

ChannelContribution channel_contributions(const Matrix& window, const Matrix& recon);

// Row t is the final row of the reconstruction of the window ending at t; rows
// before the first window end come from the first window.
Matrix reconstruct_series(const PiTransformer& model, const Series& standardized);

void write_channel_csv(const std::filesystem::path& path, const ChannelContribution& c,
                       const std::vector<std::string>& names = {});

struct PipelineResult {
  TrainResult training;
  Calibration calibration;
  StandardizerStats standardizer;
  ScoreSeries scores;
  Labels adjusted;
  EvalReport report;
};

// Calibrates a trained model on the train/threshold split of the training
// series and scores the test series.
Calibration calibrate_checkpoint(const Checkpoint& checkpoint, const RunConfig& cfg,
                                 const Series& train);
ScoreSeries score_checkpoint(const Checkpoint& checkpoint, const RunConfig& cfg,
                             const Calibration& calibration, const Series& test);

// Point-adjusts predictions against labels and computes the report.
EvalReport evaluate(const ScoreSeries& scores, const Labels& truth, const RunConfig& cfg,
                    Labels* adjusted = nullptr);

// Train, calibrate, score and evaluate.
PipelineResult run_pipeline(const RawDataset& data, const RunConfig& cfg,
                            const EpochCallback& on_epoch = {});

enum class AblationAxis { kPhaseSync, kEncLayers, kModelDim, kNumHeads, kBatchSize, kEpochs };

std::string to_string(AblationAxis axis);
AblationAxis ablation_axis_from_string(const std::string& name);

struct AblationSpec {
  AblationAxis axis = AblationAxis::kPhaseSync;
  std::vector<std::string> values;

  // Throws ConfigError for an empty list or values invalid for the axis.
  void validate() const;
};

// Base configuration with one axis value applied. no_phase also sets k = 0.
RunConfig ablation_variant(const RunConfig& base, AblationAxis axis, const std::string& value);

struct AblationCell {
  std::string axis;
  std::string value;
  bool ok = false;
  std::string error;
  EvalReport report;
};

// One cell per value; a failing cell records its error and the run continues.
std::vector<AblationCell> run_ablation(const AblationSpec& spec, const RunConfig& base,
                                       const RawDataset& data);

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationCell>& cells);

}  // namespace pit
