// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include "pit/checkpoint.hpp"
#include "pit/error.hpp"
#include "pit/eval.hpp"
#include "pit/synth.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>

namespace pit::cli {

namespace fs = std::filesystem;

fs::path resolve_output_dir(const fs::path& dir) {
  const char* root = std::getenv(kOutputRootEnv);
  const bool rooted = root != nullptr && *root != '\0';
  if (dir.empty()) return rooted ? fs::path(root) : fs::path(".");
  if (dir.is_relative() && rooted) return fs::path(root) / dir;
  return dir;
}

namespace {

// --config plus one --<dotted.key> option per configuration key.
struct RunOptions {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> options;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "key = value configuration file");
    for (const ConfigKey& key : run_config_keys()) {
      options.emplace_back(key.name, app->add_option("--" + key.name, values[key.name], key.help));
    }
  }

  KeyValueConfig overrides() const {
    KeyValueConfig kv;
    for (const auto& [name, option] : options) {
      if (option->count() > 0) kv.set(name, values.at(name));
    }
    return kv;
  }

  // Defaults, then the config file, then command-line overrides.
  RunConfig resolve() const {
    KeyValueConfig kv;
    if (!config_file.empty()) kv = KeyValueConfig::load(require_file("--config", config_file));
    const KeyValueConfig given = overrides();
    for (const auto& [key, value] : given.values()) kv.set(key, value);
    RunConfig cfg = run_config_from(kv);
    cfg.validate();
    return cfg;
  }

  // Whether the file or the command line assigns key.
  bool sets(const std::string& key) const {
    if (overrides().has(key)) return true;
    return !config_file.empty() && KeyValueConfig::load(config_file).has(key);
  }

  static fs::path require_file(const std::string& what, const fs::path& path) {
    if (path.empty()) throw ConfigError("missing " + what);
    if (!fs::is_regular_file(path)) throw ConfigError(what + ": no such file " + path.string());
    return path;
  }
};

fs::path require_file(const std::string& key, const fs::path& path) {
  return RunOptions::require_file("--" + key, path);
}

fs::path prepare_output(const RunConfig& cfg) {
  const fs::path dir = resolve_output_dir(cfg.output_dir);
  fs::create_directories(dir);
  return dir;
}

Series read_series(const fs::path& path) { return read_csv_matrix(path).values; }

std::vector<std::string> channel_header(Index channels) {
  std::vector<std::string> names;
  for (Index c = 0; c < channels; ++c) names.push_back("c" + std::to_string(c));
  return names;
}

bool same_keys(const RunConfig& a, const RunConfig& b, const std::string& prefix) {
  const KeyValueConfig ka = to_key_values(a), kb = to_key_values(b);
  const auto& va = ka.values();
  const auto& vb = kb.values();
  for (const auto& [key, value] : va) {
    if (key.rfind(prefix, 0) == 0 && vb.at(key) != value) return false;
  }
  return true;
}

// A checkpoint's saved configuration with file and command-line overrides.
// The model section is fixed by the stored parameters.
struct LoadedRun {
  SavedRun saved;
  RunConfig cfg;
  Calibration calibration;
};

LoadedRun load_run(const RunOptions& opts) {
  const RunConfig given = opts.resolve();
  LoadedRun run{load_checkpoint(require_file("checkpoint.path", given.checkpoint_path)), {}, {}};
  KeyValueConfig kv = to_key_values(run.saved.config);
  if (!opts.config_file.empty()) {
    const KeyValueConfig file = KeyValueConfig::load(opts.config_file);
    for (const auto& [key, value] : file.values()) kv.set(key, value);
  }
  const KeyValueConfig overrides = opts.overrides();
  for (const auto& [key, value] : overrides.values()) kv.set(key, value);
  run.cfg = run_config_from(kv);
  run.cfg.validate();
  if (!same_keys(run.cfg, run.saved.config, "model.")) {
    throw ConfigError("model.* keys cannot differ from the checkpoint");
  }
  const bool recalibrate = !run.cfg.train_path.empty() &&
                           run.cfg.train_path != run.saved.config.train_path;
  if (run.saved.calibration && !recalibrate && same_keys(run.cfg, run.saved.config, "score.") &&
      run.cfg.train.val_fraction == run.saved.config.train.val_fraction) {
    run.calibration = *run.saved.calibration;
  } else {
    const fs::path train_path = require_file("data.train", run.cfg.train_path);
    run.calibration = calibrate_checkpoint(run.saved.checkpoint, run.cfg, read_series(train_path));
  }
  return run;
}

int cmd_train(const RunOptions& opts, std::ostream& out) {
  RunConfig cfg = opts.resolve();
  const Series series = read_series(require_file("data.train", cfg.train_path));
  if (!opts.sets("model.channels")) cfg.model.channels = series.cols();
  if (series.cols() != cfg.model.channels) {
    throw ConfigError("model.channels is " + std::to_string(cfg.model.channels) + " but " +
                      cfg.train_path.string() + " has " + std::to_string(series.cols()) +
                      " columns");
  }
  const fs::path dir = prepare_output(cfg);
  const TrainResult result =
      train(series, cfg.model, cfg.train, [&](Index epoch, double val, bool improved) {
        out << "epoch " << epoch << "  val " << format_double(val) << (improved ? "  *" : "")
            << '\n';
      });
  const Calibration cal = calibrate_checkpoint(result.checkpoint, cfg, series);
  const fs::path ckpt = cfg.checkpoint_path.empty() ? dir / "model.ckpt" : cfg.checkpoint_path;
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  save_checkpoint(ckpt, result.checkpoint, cfg, &cal);
  write_training_log(dir / "training_log.csv", result.log);
  out << "checkpoint " << ckpt.string() << '\n'
      << "threshold " << format_double(cal.threshold) << '\n'
      << "config " << config_fingerprint(cfg) << '\n';
  return kExitOk;
}

int cmd_score(const RunOptions& opts, std::ostream& out) {
  const LoadedRun run = load_run(opts);
  const Series test = read_series(require_file("data.test", run.cfg.test_path));
  const ScoreSeries scores = score_checkpoint(run.saved.checkpoint, run.cfg, run.calibration, test);
  std::optional<Labels> truth;
  if (!run.cfg.labels_path.empty()) truth = read_labels(require_file("data.labels", run.cfg.labels_path));
  const fs::path dir = prepare_output(run.cfg);
  write_score_csv(dir / "scores.csv", scores, truth ? &*truth : nullptr);
  const Series standardized = standardize(test, run.saved.checkpoint.standardizer);
  const ChannelContribution contrib = channel_contributions(
      standardized, reconstruct_series(run.saved.checkpoint.model, standardized));
  write_channel_csv(dir / "channels.csv", contrib);
  const auto flagged = std::count(scores.y_hat.begin(), scores.y_hat.end(), std::uint8_t{1});
  out << "scored " << scores.f.size() << " steps, " << flagged << " above threshold "
      << format_double(scores.threshold) << '\n'
      << "wrote " << (dir / "scores.csv").string() << '\n';
  return kExitOk;
}

// A single 0/1 column, or a score CSV with a y_hat column.
Labels read_predictions(const fs::path& path) {
  const CsvMatrix m = read_csv_matrix(path);
  Index col = 0;
  if (m.values.cols() != 1) {
    const auto it = std::find(m.header.begin(), m.header.end(), "y_hat");
    if (it == m.header.end()) {
      throw ParseError(path.string() + ": expected one column or a y_hat column");
    }
    col = Index(it - m.header.begin());
  }
  Labels out(std::size_t(m.values.rows()));
  for (Index i = 0; i < m.values.rows(); ++i) {
    const double v = m.values(i, col);
    if (v != 0.0 && v != 1.0) {
      throw ParseError(path.string() + ": row " + std::to_string(i + 1) + " is not 0 or 1");
    }
    out[std::size_t(i)] = v == 1.0 ? 1 : 0;
  }
  return out;
}

int cmd_eval(const RunOptions& opts, const std::string& predictions, std::ostream& out) {
  EvalReport report;
  RunConfig cfg;
  if (!predictions.empty()) {
    cfg = opts.resolve();
    const Labels truth = read_labels(require_file("data.labels", cfg.labels_path));
    const Labels pred = read_predictions(RunOptions::require_file("--predictions", predictions));
    report = compute_metrics(point_adjust(pred, truth), truth);
    report.fingerprint = config_fingerprint(cfg);
    report.variant = to_string(cfg.model.prior_mode);
  } else {
    const LoadedRun run = load_run(opts);
    cfg = run.cfg;
    const Series test = read_series(require_file("data.test", cfg.test_path));
    const Labels truth = read_labels(require_file("data.labels", cfg.labels_path));
    const ScoreSeries scores = score_checkpoint(run.saved.checkpoint, cfg, run.calibration, test);
    report = evaluate(scores, truth, cfg);
  }
  const fs::path dir = prepare_output(cfg);
  std::ofstream json(dir / "report.json");
  if (!json) throw ParseError("cannot write " + (dir / "report.json").string());
  json << report.to_json() << '\n';
  out << report.to_text();
  return kExitOk;
}

struct SynthOptions {
  std::string spec_file;
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> options;
  std::string output_dir;

  void attach(CLI::App* app) {
    app->add_option("--spec", spec_file, "synthetic spec file (key = value)");
    const std::vector<std::pair<std::string, std::string>> keys = {
        {"type", "point, contextual, collective, seasonal or trend"},
        {"seed", "random seed"},
        {"length", "series length"},
        {"channels", "number of channels"},
        {"period_scale", "base period"},
        {"noise", "noise standard deviation"},
        {"segments", "type:start:length:magnitude[:channel];..."}};
    for (const auto& [key, help] : keys) {
      options.emplace_back(key, app->add_option("--" + key, values[key], help));
    }
    app->add_option("--output.dir", output_dir, "output directory");
  }
};

int cmd_synth(const SynthOptions& opts, std::ostream& out) {
  KeyValueConfig kv;
  if (!opts.spec_file.empty()) kv = KeyValueConfig::load(RunOptions::require_file("--spec", opts.spec_file));
  for (const auto& [name, option] : opts.options) {
    if (option->count() > 0) kv.set(name, opts.values.at(name));
  }
  const SyntheticSpec spec = parse_synthetic_spec(kv.dump());
  const SyntheticData data = synth_generate(spec);
  const fs::path dir = resolve_output_dir(opts.output_dir);
  fs::create_directories(dir);
  const auto header = channel_header(spec.channels);
  write_csv_matrix(dir / "train.csv", data.train, header);
  write_csv_matrix(dir / "test.csv", data.test, header);
  write_labels(dir / "labels.csv", data.labels);
  std::ofstream spec_out(dir / "spec.cfg");
  spec_out << format_synthetic_spec(spec);
  if (!spec_out) throw ParseError("cannot write " + (dir / "spec.cfg").string());
  out << "wrote " << spec.length << " x " << spec.channels << " series to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_ablate(const RunOptions& opts, const std::string& axis,
               const std::vector<std::string>& values, std::ostream& out) {
  RunConfig cfg = opts.resolve();
  AblationSpec spec{ablation_axis_from_string(axis), values};
  spec.validate();
  const RawDataset data =
      load_csv_dataset(require_file("data.train", cfg.train_path),
                       require_file("data.test", cfg.test_path),
                       require_file("data.labels", cfg.labels_path));
  if (!opts.sets("model.channels")) cfg.model.channels = data.train.cols();
  const fs::path dir = prepare_output(cfg);
  const std::vector<AblationCell> cells = run_ablation(spec, cfg, data);
  write_ablation_csv(dir / "ablation.csv", cells);
  out << std::left << std::setw(14) << to_string(spec.axis) << std::right << std::setw(10)
      << "accuracy" << std::setw(11) << "precision" << std::setw(8) << "recall" << std::setw(8)
      << "f1" << '\n'
      << std::fixed << std::setprecision(2);
  bool failed = false;
  for (const AblationCell& c : cells) {
    out << std::left << std::setw(14) << c.value << std::right;
    if (!c.ok) {
      out << "  failed: " << c.error << '\n';
      failed = true;
      continue;
    }
    out << std::setw(10) << c.report.accuracy << std::setw(11) << c.report.precision
        << std::setw(8) << c.report.recall << std::setw(8) << c.report.f1 << '\n';
  }
  return failed ? kExitFailure : kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pi-Transformer anomaly detection", "pit"};
  app.require_subcommand(1);

  RunOptions train_opts, score_opts, eval_opts, ablate_opts;
  SynthOptions synth_opts;
  std::string predictions, axis;
  std::vector<std::string> values;

  CLI::App* train_cmd = app.add_subcommand("train", "fit a model and save a checkpoint");
  train_opts.attach(train_cmd);
  CLI::App* score_cmd = app.add_subcommand("score", "write the score streams of a test series");
  score_opts.attach(score_cmd);
  CLI::App* eval_cmd = app.add_subcommand("eval", "point-adjusted metrics against labels");
  eval_opts.attach(eval_cmd);
  eval_cmd->add_option("--predictions", predictions, "0/1 predictions or a score CSV");
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  synth_opts.attach(synth_cmd);
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "train and evaluate one variant per value");
  ablate_opts.attach(ablate_cmd);
  ablate_cmd->add_option("--axis", axis, "phase_sync, enc_layers, model_dim, num_heads, batch_size or epochs")
      ->required();
  ablate_cmd->add_option("--values", values, "comma-separated values")->delimiter(',')->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_opts, out);
    if (score_cmd->parsed()) return cmd_score(score_opts, out);
    if (eval_cmd->parsed()) return cmd_eval(eval_opts, predictions, out);
    if (synth_cmd->parsed()) return cmd_synth(synth_opts, out);
    if (ablate_cmd->parsed()) return cmd_ablate(ablate_opts, axis, values, out);
  } catch (const ConfigError& e) {
    err << "pit: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "pit: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace pit::cli
