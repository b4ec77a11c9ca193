// SPDX-License-Identifier: Apache-2.0
#include "pit/eval.hpp"

#include "pit/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace pit {

double f1_score(double precision, double recall) {
  const double total = precision + recall;
  return total > 0.0 ? 2.0 * precision * recall / total : 0.0;
}

EvalReport compute_metrics(const Labels& predicted, const Labels& truth) {
  if (predicted.size() != truth.size()) {
    throw DimensionError("compute_metrics: " + std::to_string(predicted.size()) +
                         " predictions for " + std::to_string(truth.size()) + " labels");
  }
  EvalReport r;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] != 0;
    const bool y = truth[i] != 0;
    r.tp += p && y;
    r.fp += p && !y;
    r.tn += !p && !y;
    r.fn += !p && y;
  }
  const double n = double(truth.size());
  r.accuracy = n > 0 ? 100.0 * double(r.tp + r.tn) / n : 0.0;
  r.no_predicted_positives = r.tp + r.fp == 0;
  r.precision = r.no_predicted_positives ? 0.0 : 100.0 * double(r.tp) / double(r.tp + r.fp);
  r.recall = r.tp + r.fn == 0 ? 0.0 : 100.0 * double(r.tp) / double(r.tp + r.fn);
  r.f1 = f1_score(r.precision, r.recall);
  return r;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["accuracy"] = accuracy;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  j["tp"] = tp;
  j["fp"] = fp;
  j["tn"] = tn;
  j["fn"] = fn;
  j["no_predicted_positives"] = no_predicted_positives;
  j["threshold"] = threshold;
  j["fingerprint"] = fingerprint;
  j["variant"] = variant;
  return j.dump(2);
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << std::left << std::setw(12) << "accuracy" << std::right << std::setw(8) << accuracy << '\n'
     << std::left << std::setw(12) << "precision" << std::right << std::setw(8) << precision
     << (no_predicted_positives ? "  (no predicted positives)" : "") << '\n'
     << std::left << std::setw(12) << "recall" << std::right << std::setw(8) << recall << '\n'
     << std::left << std::setw(12) << "f1" << std::right << std::setw(8) << f1 << '\n';
  os << "tp " << tp << "  fp " << fp << "  tn " << tn << "  fn " << fn << '\n';
  if (!variant.empty()) os << "variant " << variant << '\n';
  if (!fingerprint.empty()) os << "config " << fingerprint << '\n';
  return os.str();
}

std::vector<Segment> label_segments(const Labels& labels) {
  std::vector<Segment> out;
  std::size_t i = 0;
  while (i < labels.size()) {
    if (!labels[i]) {
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end < labels.size() && labels[end]) ++end;
    out.push_back({Index(i), Index(end)});
    i = end;
  }
  return out;
}

Index detected_segments(const Labels& predicted, const Labels& truth) {
  if (predicted.size() != truth.size()) {
    throw DimensionError("detected_segments: length mismatch");
  }
  Index hits = 0;
  for (const Segment& s : label_segments(truth)) {
    for (Index t = s.start; t < s.end; ++t) {
      if (predicted[std::size_t(t)]) {
        ++hits;
        break;
      }
    }
  }
  return hits;
}

ChannelContribution channel_contributions(const Matrix& window, const Matrix& recon) {
  if (window.rows() != recon.rows() || window.cols() != recon.cols()) {
    throw DimensionError("channel_contributions: " + shape_string(window.rows(), window.cols()) +
                         " vs " + shape_string(recon.rows(), recon.cols()));
  }
  const Matrix err = (window - recon).array().square().matrix();
  const double n = double(err.rows());
  ChannelContribution c;
  c.mean = err.colwise().sum().transpose() / n;
  c.variance.resize(err.cols());
  for (Index j = 0; j < err.cols(); ++j) {
    c.variance(j) = (err.col(j).array() - c.mean(j)).square().sum() / n;
  }
  c.ranking.resize(std::size_t(err.cols()));
  std::iota(c.ranking.begin(), c.ranking.end(), Index{0});
  std::stable_sort(c.ranking.begin(), c.ranking.end(),
                   [&](Index a, Index b) { return c.mean(a) > c.mean(b); });
  return c;
}

Matrix reconstruct_series(const PiTransformer& model, const Series& standardized) {
  const Index L = model.config().window_length;
  const Index count = window_count(standardized.rows(), L);
  Matrix out(standardized.rows(), standardized.cols());
  for (Index k = 0; k < count; ++k) {
    const Matrix recon = model.forward(window_view(standardized, k, L)).recon.value();
    if (k == 0) out.topRows(L - 1) = recon.topRows(L - 1);
    out.row(k + L - 1) = recon.row(L - 1);
  }
  return out;
}

void write_channel_csv(const std::filesystem::path& path, const ChannelContribution& c,
                       const std::vector<std::string>& names) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  std::vector<Index> rank(c.ranking.size());
  for (std::size_t k = 0; k < c.ranking.size(); ++k) rank[std::size_t(c.ranking[k])] = Index(k) + 1;
  out << "channel,name,mean,variance,rank\n";
  for (Index j = 0; j < c.mean.size(); ++j) {
    const std::string name = std::size_t(j) < names.size() ? names[std::size_t(j)] : "c" + std::to_string(j);
    out << j << ',' << name << ',' << format_double(c.mean(j)) << ',' << format_double(c.variance(j))
        << ',' << rank[std::size_t(j)] << '\n';
  }
}

Calibration calibrate_checkpoint(const Checkpoint& checkpoint, const RunConfig& cfg,
                                 const Series& train) {
  const Series standardized = standardize(train, checkpoint.standardizer);
  const TrainValSplit split =
      split_train_val(standardized, cfg.train.val_fraction, checkpoint.model.config().window_length);
  return calibrate(checkpoint.model, split.train, split.val, cfg.scoring);
}

ScoreSeries score_checkpoint(const Checkpoint& checkpoint, const RunConfig& cfg,
                             const Calibration& calibration, const Series& test) {
  return score_series(checkpoint.model, standardize(test, checkpoint.standardizer), cfg.scoring,
                      calibration);
}

EvalReport evaluate(const ScoreSeries& scores, const Labels& truth, const RunConfig& cfg,
                    Labels* adjusted) {
  const Labels adj = point_adjust(scores.y_hat, truth);
  EvalReport report = compute_metrics(adj, truth);
  report.threshold = scores.threshold;
  report.fingerprint = config_fingerprint(cfg);
  report.variant = to_string(cfg.model.prior_mode);
  if (adjusted != nullptr) *adjusted = adj;
  return report;
}

PipelineResult run_pipeline(const RawDataset& data, const RunConfig& cfg,
                            const EpochCallback& on_epoch) {
  cfg.validate();
  if (Index(data.test_labels.size()) != data.test.rows()) {
    throw ContractError("run_pipeline: label length does not match the test series");
  }
  PipelineResult out{train(data.train, cfg.model, cfg.train, on_epoch), {}, {}, {}, {}, {}};
  const Checkpoint& ck = out.training.checkpoint;
  out.standardizer = ck.standardizer;
  out.calibration = calibrate_checkpoint(ck, cfg, data.train);
  out.scores = score_checkpoint(ck, cfg, out.calibration, data.test);
  out.report = evaluate(out.scores, data.test_labels, cfg, &out.adjusted);
  return out;
}

std::string to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::kPhaseSync:
      return "phase_sync";
    case AblationAxis::kEncLayers:
      return "enc_layers";
    case AblationAxis::kModelDim:
      return "model_dim";
    case AblationAxis::kNumHeads:
      return "num_heads";
    case AblationAxis::kBatchSize:
      return "batch_size";
    case AblationAxis::kEpochs:
      return "epochs";
  }
  return "phase_sync";
}

AblationAxis ablation_axis_from_string(const std::string& name) {
  for (AblationAxis a : {AblationAxis::kPhaseSync, AblationAxis::kEncLayers,
                         AblationAxis::kModelDim, AblationAxis::kNumHeads,
                         AblationAxis::kBatchSize, AblationAxis::kEpochs}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown ablation axis '" + name +
                    "' (expected phase_sync, enc_layers, model_dim, num_heads, batch_size, epochs)");
}

void AblationSpec::validate() const {
  if (values.empty()) throw ConfigError("ablation: no values for axis " + to_string(axis));
  for (const std::string& v : values) {
    if (axis == AblationAxis::kPhaseSync) {
      prior_mode_from_string(v);
      continue;
    }
    const long long n = parse_int("ablation." + to_string(axis), v);
    const bool zero_ok = axis == AblationAxis::kEpochs;
    if (n < (zero_ok ? 0 : 1)) {
      throw ConfigError("ablation: value " + v + " is out of range for axis " + to_string(axis));
    }
  }
}

RunConfig ablation_variant(const RunConfig& base, AblationAxis axis, const std::string& value) {
  RunConfig cfg = base;
  const std::string key = "ablation." + to_string(axis);
  switch (axis) {
    case AblationAxis::kPhaseSync:
      cfg.model.prior_mode = prior_mode_from_string(value);
      if (cfg.model.prior_mode == PriorMode::kNoPhase) cfg.train.k = 0.0;
      break;
    case AblationAxis::kEncLayers:
      cfg.model.num_layers = parse_int(key, value);
      break;
    case AblationAxis::kModelDim:
      cfg.model.model_dim = parse_int(key, value);
      break;
    case AblationAxis::kNumHeads:
      cfg.model.num_heads = parse_int(key, value);
      break;
    case AblationAxis::kBatchSize:
      cfg.train.batch_size = parse_int(key, value);
      break;
    case AblationAxis::kEpochs:
      cfg.train.max_epochs = parse_int(key, value);
      break;
  }
  return cfg;
}

std::vector<AblationCell> run_ablation(const AblationSpec& spec, const RunConfig& base,
                                       const RawDataset& data) {
  spec.validate();
  std::vector<AblationCell> cells;
  for (const std::string& value : spec.values) {
    AblationCell cell;
    cell.axis = to_string(spec.axis);
    cell.value = value;
    try {
      const RunConfig cfg = ablation_variant(base, spec.axis, value);
      cell.report = run_pipeline(data, cfg).report;
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationCell>& cells) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << "axis,value,variant,accuracy,precision,recall,f1,status,fingerprint\n";
  for (const AblationCell& c : cells) {
    std::string error = c.error;
    std::replace(error.begin(), error.end(), ',', ';');
    std::replace(error.begin(), error.end(), '\n', ' ');
    out << c.axis << ',' << c.value << ',' << c.report.variant << ',' << format_double(c.report.accuracy)
        << ',' << format_double(c.report.precision) << ',' << format_double(c.report.recall) << ','
        << format_double(c.report.f1) << ',' << (c.ok ? "ok" : "failed: " + error) << ','
        << c.report.fingerprint << '\n';
  }
}

}  // namespace pit
