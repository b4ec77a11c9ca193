// SPDX-License-Identifier: Apache-2.0
#include "pit/training.hpp"

#include "pit/error.hpp"
#include "pit/ops.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace pit {

void TrainConfig::validate() const {
  auto nonneg = [](double v, const char* name) {
    if (!(v >= 0.0)) throw ConfigError(std::string("train.") + name + " must be >= 0");
  };
  nonneg(k, "k");
  nonneg(lambda_reg, "lambda_reg");
  nonneg(lambda_hurst, "lambda_hurst");
  nonneg(lambda_scores, "lambda_scores");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (batch_size <= 0) throw ConfigError("train.batch_size must be positive");
  if (max_epochs < 0) throw ConfigError("train.max_epochs must be >= 0");
  if (patience < 1) throw ConfigError("train.patience must be >= 1");
  if (!(clip_norm > 0.0)) throw ConfigError("train.clip_norm must be positive");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("train.val_fraction must be in (0, 1)");
  }
  if (stride <= 0) throw ConfigError("train.stride must be positive");
  if (max_batches_per_epoch < 0) throw ConfigError("train.max_batches_per_epoch must be >= 0");
}

Tensor loss_reconstruction(const Tensor& x, const Tensor& x_hat) {
  if (x.shape() != x_hat.shape()) {
    throw DimensionError("loss_reconstruction: " + x.shape_string() + " vs " +
                         x_hat.shape_string());
  }
  return mean(square(sub(x, x_hat)));
}

Tensor loss_sym_kl(const AttentionStack& attn, KlFrozen frozen, bool average) {
  if (attn.series.size() != attn.prior.size()) {
    throw DimensionError("loss_sym_kl: series and prior stacks differ in layer count");
  }
  Tensor total = Tensor::scalar(0.0);
  std::size_t count = 0;
  for (std::size_t l = 0; l < attn.series.size(); ++l) {
    if (attn.series[l].size() != attn.prior[l].size()) {
      throw DimensionError("loss_sym_kl: series and prior stacks differ in head count");
    }
    for (std::size_t h = 0; h < attn.series[l].size(); ++h) {
      const bool prior_free = frozen == KlFrozen::kSeries;
      const Tensor& a = prior_free ? attn.prior[l][h] : attn.series[l][h];
      Tensor b = stop_gradient(prior_free ? attn.series[l][h] : attn.prior[l][h]);
      total = add(total, add(sum(kl_div_rows(a, b)), sum(kl_div_rows(b, a))));
      ++count;
    }
  }
  if (average && count > 0) total = scale(total, 1.0 / double(count));
  return total;
}

Tensor loss_smoothness(const PriorFields& fields) {
  const Index length = fields.hurst.rows();
  if (length < 2) {
    throw ContractError("loss_smoothness: needs at least 2 positions, got " +
                        std::to_string(length));
  }
  const double inv = 1.0 / double(length - 1);
  return scale(add(sum(square(first_difference(fields.hurst))),
                   sum(square(first_difference(fields.stiffness)))),
               inv);
}

Tensor loss_smoothness(const std::vector<PriorFields>& fields) {
  Tensor total = Tensor::scalar(0.0);
  for (const PriorFields& f : fields) total = add(total, loss_smoothness(f));
  return total;
}

Tensor loss_hurst_distill(const PriorFields& fields, double target) {
  return mean(square(add_scalar(fields.hurst, -target)));
}

Tensor loss_hurst_distill(const std::vector<PriorFields>& fields, double target) {
  if (fields.empty()) return Tensor::scalar(0.0);
  Tensor total = Tensor::scalar(0.0);
  for (const PriorFields& f : fields) total = add(total, loss_hurst_distill(f, target));
  return scale(total, 1.0 / double(fields.size()));
}

Tensor loss_prior_scores(const std::vector<std::vector<Tensor>>& scores) {
  Tensor total = Tensor::scalar(0.0);
  std::size_t count = 0;
  for (const auto& layer : scores) {
    for (const Tensor& s : layer) {
      const double causal = double(s.rows()) * double(s.rows() + 1) / 2.0;
      total = add(total, scale(sum(square(s)), 1.0 / causal));
      ++count;
    }
  }
  if (count > 0) total = scale(total, 1.0 / double(count));
  return total;
}

namespace {

void require_finite(const Tensor& t, const char* term) {
  if (!std::isfinite(t.item())) {
    throw NumericError(std::string("training loss diverged: ") + term + " = " +
                       std::to_string(t.item()));
  }
}

}  // namespace

PassLosses pass_losses(const ReconOutput& out, const Matrix& window, const TrainConfig& cfg,
                       double hurst_target, Pass pass) {
  PassLosses l;
  l.recon = loss_reconstruction(Tensor(window), out.recon);
  require_finite(l.recon, "recon");
  l.smooth = loss_smoothness(out.fields);
  require_finite(l.smooth, "smooth");
  l.hurst = loss_hurst_distill(out.fields, hurst_target);
  require_finite(l.hurst, "hurst");
  l.scores = loss_prior_scores(out.prior_scores);
  require_finite(l.scores, "prior_scores");
  Tensor reg = add(add(scale(l.smooth, cfg.lambda_reg), scale(l.hurst, cfg.lambda_hurst)),
                   scale(l.scores, cfg.lambda_scores));
  Tensor base = add(l.recon, reg);

  switch (pass) {
    case Pass::kFirst:
      l.sym_kl = loss_sym_kl(out.attn, KlFrozen::kPrior, cfg.average_kl);
      require_finite(l.sym_kl, "sym_kl");
      l.total = sub(base, scale(l.sym_kl, cfg.k));
      break;
    case Pass::kSecond:
      l.sym_kl = loss_sym_kl(out.attn, KlFrozen::kSeries, cfg.average_kl);
      require_finite(l.sym_kl, "sym_kl");
      l.total = add(base, scale(l.sym_kl, cfg.k));
      break;
    case Pass::kSingle: {
      l.sym_kl = loss_sym_kl(out.attn, KlFrozen::kPrior, cfg.average_kl);
      require_finite(l.sym_kl, "sym_kl");
      Tensor ascend = loss_sym_kl(out.attn, KlFrozen::kSeries, cfg.average_kl);
      l.total = sub(add(base, scale(l.sym_kl, cfg.k)), scale(ascend, cfg.k));
      break;
    }
  }
  require_finite(l.total, "total");
  return l;
}

namespace {

struct PassResult {
  double recon = 0.0, sym_kl = 0.0, smooth = 0.0, hurst = 0.0, scores = 0.0, total = 0.0;
};

PassResult run_pass(const std::vector<Matrix>& batch, PiTransformer& model, OptimizerState& opt,
                    const TrainConfig& cfg, double hurst_target, Pass pass) {
  model.zero_grad();
  PassResult r;
  const double inv_b = 1.0 / double(batch.size());
  for (const Matrix& window : batch) {
    Tape tape;
    Tape::Scope scope(tape);
    ReconOutput out = model.forward_training(window);
    PassLosses l = pass_losses(out, window, cfg, hurst_target, pass);
    tape.backward(scale(l.total, inv_b));
    r.recon += l.recon.item() * inv_b;
    r.sym_kl += l.sym_kl.item() * inv_b;
    r.smooth += l.smooth.item() * inv_b;
    r.hurst += l.hurst.item() * inv_b;
    r.scores += l.scores.item() * inv_b;
    r.total += l.total.item() * inv_b;
  }
  std::vector<Tensor> params = model.tensors();
  clip_global_norm(params, cfg.clip_norm);
  adam_step(opt, params);
  return r;
}

}  // namespace

LossBreakdown minmax_step(const std::vector<Matrix>& batch, PiTransformer& model,
                          OptimizerState& opt, const TrainConfig& cfg, double hurst_target) {
  if (batch.empty()) throw ContractError("minmax_step: empty batch");
  opt.clip_norm = cfg.clip_norm;
  LossBreakdown out;
  if (cfg.single_loss) {
    const PassResult p = run_pass(batch, model, opt, cfg, hurst_target, Pass::kSingle);
    out = {p.recon, p.sym_kl, p.smooth, p.hurst, p.scores, p.total, p.total};
    return out;
  }
  const PassResult p1 = run_pass(batch, model, opt, cfg, hurst_target, Pass::kFirst);
  const PassResult p2 = run_pass(batch, model, opt, cfg, hurst_target, Pass::kSecond);
  out = {p1.recon, p1.sym_kl, p1.smooth, p1.hurst, p1.scores, p1.total, p2.total};
  return out;
}

double validation_loss(const PiTransformer& model, const std::vector<Matrix>& windows) {
  if (windows.empty()) throw ContractError("validation_loss: no windows");
  double total = 0.0;
  for (const Matrix& w : windows) {
    const ReconOutput out = model.forward(w);
    total += (w - out.recon.value()).squaredNorm() / double(w.size());
  }
  return total / double(windows.size());
}

double dataset_hurst(const Series& series) {
  const Index n = series.rows();
  const Index min_block = std::clamp<Index>(n / 4, 2, 16);
  if (n < 4 * min_block) {
    throw ContractError("dataset_hurst: series of length " + std::to_string(n) +
                        " is too short for a rescaled-range estimate");
  }
  double total = 0.0;
  for (Index c = 0; c < series.cols(); ++c) {
    const Vector col = series.col(c);
    total += estimate_hurst_rs(col, min_block).value;
  }
  return total / double(series.cols());
}

bool EarlyStopping::update(double loss) {
  if (loss < best_) {
    best_ = loss;
    bad_epochs_ = 0;
    return true;
  }
  ++bad_epochs_;
  return false;
}

TrainResult train(const Series& train_series, const ModelConfig& model_cfg,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  model_cfg.validate();
  if (train_series.rows() == 0) throw ContractError("train: empty training series");
  if (train_series.cols() != model_cfg.channels) {
    throw ConfigError("train: series has " + std::to_string(train_series.cols()) +
                      " channels, model expects " + std::to_string(model_cfg.channels));
  }
  const Index L = model_cfg.window_length;
  if (train_series.rows() < L) {
    throw ContractError("train: window length " + std::to_string(L) +
                        " exceeds the series length " + std::to_string(train_series.rows()));
  }

  const StandardizerStats stats = fit_standardizer(train_series);
  const Series standardized = standardize(train_series, stats);
  const TrainValSplit split = split_train_val(standardized, cfg.val_fraction, L);
  const std::vector<Matrix> train_windows = windows(split.train, L, cfg.stride);
  const std::vector<Matrix> val_windows = windows(split.val, L, cfg.stride);

  TrainResult result{Checkpoint{PiTransformer(model_cfg), cfg, {}, stats, 0,
                                std::numeric_limits<double>::infinity(), 0.5},
                     {}, {}, 0};
  Checkpoint& best = result.checkpoint;
  best.hurst_target = dataset_hurst(split.train);
  best.optimizer.learning_rate = cfg.learning_rate;
  best.optimizer.clip_norm = cfg.clip_norm;

  PiTransformer model = best.model.clone();
  OptimizerState opt = best.optimizer;
  if (cfg.max_epochs == 0) {
    best.best_val = validation_loss(model, val_windows);
    return result;
  }

  std::vector<std::size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(cfg.seed);
  EarlyStopping stopper(cfg.patience);
  Index step = 0;
  const std::size_t batch = std::size_t(cfg.batch_size);

  for (Index epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
    Index batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      if (cfg.max_batches_per_epoch > 0 && batches >= cfg.max_batches_per_epoch) break;
      const std::size_t end = std::min(order.size(), start + batch);
      std::vector<Matrix> items;
      items.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) items.push_back(train_windows[order[k]]);
      const LossBreakdown loss = minmax_step(items, model, opt, cfg, best.hurst_target);
      result.log.push_back({++step, loss});
      ++batches;
    }
    const double val = validation_loss(model, val_windows);
    result.val_history.push_back(val);
    result.epochs_run = epoch;
    const bool improved = stopper.update(val);
    if (improved) {
      best.model.restore(model.snapshot());
      best.optimizer = opt;
      best.epoch = epoch;
      best.best_val = val;
    }
    if (on_epoch) on_epoch(epoch, val, improved);
    if (stopper.should_stop()) break;
  }
  return result;
}

namespace {

std::string number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

void write_training_log(std::ostream& os, const std::vector<StepLog>& log) {
  os << "step,recon,sym_kl,smooth,hurst,total_L1,total_L2\n";
  for (const StepLog& s : log) {
    os << s.step << ',' << number(s.loss.recon) << ',' << number(s.loss.sym_kl) << ','
       << number(s.loss.smooth) << ',' << number(s.loss.hurst) << ',' << number(s.loss.total_l1)
       << ',' << number(s.loss.total_l2) << '\n';
  }
}

void write_training_log(const std::filesystem::path& path, const std::vector<StepLog>& log) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  write_training_log(out, log);
}

}  // namespace pit
