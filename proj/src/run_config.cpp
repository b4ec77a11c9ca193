// SPDX-License-Identifier: Apache-2.0
#include "pit/run_config.hpp"

#include "pit/error.hpp"

#include <charconv>
#include <cstdio>
#include <functional>

namespace pit {

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string to_string(Projection mode) {
  return mode == Projection::kEndAnchored ? "end_anchored" : "mean_covering";
}

Projection projection_from_string(const std::string& name) {
  if (name == "end_anchored") return Projection::kEndAnchored;
  if (name == "mean_covering") return Projection::kMeanCovering;
  throw ConfigError("unknown projection '" + name + "' (expected end_anchored, mean_covering)");
}

namespace {

struct Field {
  ConfigKey key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename T>
Field integer(std::string name, std::string help, T RunConfig::*group, Index T::*member) {
  const std::string key = name;
  return {{std::move(name), std::move(help)},
          [=](const RunConfig& c) { return std::to_string((c.*group).*member); },
          [=](RunConfig& c, const std::string& v) { (c.*group).*member = parse_int(key, v); }};
}

template <typename T>
Field seed(std::string name, std::string help, T RunConfig::*group, std::uint64_t T::*member) {
  const std::string key = name;
  return {{std::move(name), std::move(help)},
          [=](const RunConfig& c) { return std::to_string((c.*group).*member); },
          [=](RunConfig& c, const std::string& v) {
            const long long parsed = parse_int(key, v);
            if (parsed < 0) throw ConfigError("config key " + key + " must be >= 0");
            (c.*group).*member = static_cast<std::uint64_t>(parsed);
          }};
}

template <typename T>
Field real(std::string name, std::string help, T RunConfig::*group, double T::*member) {
  const std::string key = name;
  return {{std::move(name), std::move(help)},
          [=](const RunConfig& c) { return format_double((c.*group).*member); },
          [=](RunConfig& c, const std::string& v) { (c.*group).*member = parse_double(key, v); }};
}

template <typename T>
Field boolean(std::string name, std::string help, T RunConfig::*group, bool T::*member) {
  const std::string key = name;
  return {{std::move(name), std::move(help)},
          [=](const RunConfig& c) { return std::string((c.*group).*member ? "true" : "false"); },
          [=](RunConfig& c, const std::string& v) { (c.*group).*member = parse_bool(key, v); }};
}

Field path(std::string name, std::string help, std::filesystem::path RunConfig::*member) {
  return {{std::move(name), std::move(help)},
          [=](const RunConfig& c) { return (c.*member).string(); },
          [=](RunConfig& c, const std::string& v) { c.*member = v; }};
}

const std::vector<Field>& fields() {
  using M = ModelConfig;
  using T = TrainConfig;
  using S = ScoringConfig;
  static const std::vector<Field> table = {
      integer<M>("model.window_length", "window length L", &RunConfig::model, &M::window_length),
      integer<M>("model.channels", "input channels C", &RunConfig::model, &M::channels),
      integer<M>("model.model_dim", "encoder width", &RunConfig::model, &M::model_dim),
      integer<M>("model.num_layers", "encoder layers", &RunConfig::model, &M::num_layers),
      integer<M>("model.num_heads", "attention heads", &RunConfig::model, &M::num_heads),
      integer<M>("model.feedforward_dim", "feedforward width", &RunConfig::model,
                 &M::feedforward_dim),
      integer<M>("model.prior_hidden", "prior head width", &RunConfig::model, &M::prior_hidden),
      real<M>("model.dropout", "dropout rate", &RunConfig::model, &M::dropout),
      seed<M>("model.seed", "initialization seed", &RunConfig::model, &M::seed),
      {{"model.prior_mode", "full, no_phase or single_head"},
       [](const RunConfig& c) { return to_string(c.model.prior_mode); },
       [](RunConfig& c, const std::string& v) { c.model.prior_mode = prior_mode_from_string(v); }},
      real<T>("train.k", "series-prior coupling weight", &RunConfig::train, &T::k),
      real<T>("train.lambda_reg", "smoothness weight", &RunConfig::train, &T::lambda_reg),
      real<T>("train.lambda_hurst", "Hurst distillation weight", &RunConfig::train,
              &T::lambda_hurst),
      real<T>("train.lambda_scores", "prior score penalty weight", &RunConfig::train,
              &T::lambda_scores),
      real<T>("train.learning_rate", "Adam learning rate", &RunConfig::train, &T::learning_rate),
      integer<T>("train.batch_size", "windows per step", &RunConfig::train, &T::batch_size),
      integer<T>("train.max_epochs", "epoch limit", &RunConfig::train, &T::max_epochs),
      integer<T>("train.patience", "early stopping patience", &RunConfig::train, &T::patience),
      real<T>("train.clip_norm", "global gradient norm limit", &RunConfig::train, &T::clip_norm),
      real<T>("train.val_fraction", "validation tail fraction", &RunConfig::train,
              &T::val_fraction),
      integer<T>("train.stride", "training window stride", &RunConfig::train, &T::stride),
      integer<T>("train.max_batches_per_epoch", "step cap per epoch (0 = none)",
                 &RunConfig::train, &T::max_batches_per_epoch),
      boolean<T>("train.average_kl", "average symKL over layers and heads", &RunConfig::train,
                 &T::average_kl),
      boolean<T>("train.single_loss", "single descend/ascend objective", &RunConfig::train,
                 &T::single_loss),
      boolean<T>("train.shuffle", "shuffle windows each epoch", &RunConfig::train, &T::shuffle),
      seed<T>("train.seed", "shuffle seed", &RunConfig::train, &T::seed),
      real<S>("score.temperature", "mismatch temperature", &RunConfig::scoring, &S::temperature),
      real<S>("score.anomaly_ratio", "flagged percentage", &RunConfig::scoring,
              &S::anomaly_ratio),
      {{"score.projection", "end_anchored or mean_covering"},
       [](const RunConfig& c) { return to_string(c.scoring.projection); },
       [](RunConfig& c, const std::string& v) { c.scoring.projection = projection_from_string(v); }},
      path("data.train", "training CSV", &RunConfig::train_path),
      path("data.test", "test CSV", &RunConfig::test_path),
      path("data.labels", "test label CSV", &RunConfig::labels_path),
      path("output.dir", "output directory", &RunConfig::output_dir),
      path("checkpoint.path", "checkpoint file", &RunConfig::checkpoint_path),
  };
  return table;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  train.validate();
  scoring.validate();
}

const std::vector<ConfigKey>& run_config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const Field& f : fields()) out.push_back(f.key);
    return out;
  }();
  return keys;
}

void apply(const KeyValueConfig& kv, RunConfig& cfg) {
  for (const auto& [key, value] : kv.values()) {
    bool found = false;
    for (const Field& f : fields()) {
      if (f.key.name == key) {
        f.set(cfg, value);
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("unknown config key " + key);
  }
}

RunConfig run_config_from(const KeyValueConfig& kv) {
  RunConfig cfg;
  apply(kv, cfg);
  return cfg;
}

KeyValueConfig to_key_values(const RunConfig& cfg) {
  KeyValueConfig kv;
  for (const Field& f : fields()) kv.set(f.key.name, f.get(cfg));
  return kv;
}

std::string config_fingerprint(const RunConfig& cfg) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (const Field& f : fields()) {
    const std::string& name = f.key.name;
    if (name.rfind("model.", 0) != 0 && name.rfind("train.", 0) != 0 &&
        name.rfind("score.", 0) != 0) {
      continue;
    }
    const std::string entry = name + "=" + f.get(cfg) + "\n";
    for (unsigned char ch : entry) {
      hash ^= ch;
      hash *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

}  // namespace pit
