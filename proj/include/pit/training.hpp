// SPDX-License-Identifier: Apache-2.0
//
// Min-max training. Each step runs two passes over the same batch:
//
//   pass 1   L1 = recon - k * symKL(S || sg P) + R
//   pass 2   L2 = recon + k * symKL(P || sg S) + R
//
// where symKL(A || sg B) = sum over layers, heads and rows of
// KL(A_i || sg B_i) + KL(sg B_i || A_i), and
//
//   R = lambda_reg * smooth(H, tau) + lambda_hurst * mean (H_i - H_target)^2
//       + lambda_scores * mean(prior score^2)
//
// Each pass back-propagates the batch mean, clips the global gradient norm and
// applies one Adam update.
#pragma once

#include "pit/data.hpp"
#include "pit/model.hpp"
#include "pit/optim.hpp"

#include <filesystem>
#include <functional>
#include <limits>
#include <ostream>
#include <vector>

namespace pit {

struct TrainConfig {
  double k = 3.0;
  double lambda_reg = 0.1;
  double lambda_hurst = 0.01;
  double lambda_scores = 1e-4;
  double learning_rate = 1e-4;
  Index batch_size = 256;
  Index max_epochs = 5;
  Index patience = 3;
  double clip_norm = 5.0;
  double val_fraction = 0.2;
  // Window stride used when sampling training and validation windows.
  Index stride = 1;
  // Caps the number of optimizer steps per epoch; 0 means no cap.
  Index max_batches_per_epoch = 0;
  // Divide symKL by num_layers * num_heads.
  bool average_kl = false;
  // Single objective recon + R + k * symKL; series parameters descend, prior
  // parameters ascend the divergence.
  bool single_loss = false;
  bool shuffle = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossBreakdown {
  double recon = 0.0;
  double sym_kl = 0.0;
  double smooth = 0.0;
  double hurst = 0.0;
  double scores = 0.0;
  double total_l1 = 0.0;
  double total_l2 = 0.0;
};

// Which side of the divergence is held constant.
enum class KlFrozen {
  kPrior,   // KL(S || sg P) + KL(sg P || S)
  kSeries,  // KL(P || sg S) + KL(sg S || P)
};

// (1/L) sum_i (1/C) sum_c (x - x_hat)^2.
Tensor loss_reconstruction(const Tensor& x, const Tensor& x_hat);

// Sum over layers, heads and rows; divided by layers * heads when average.
Tensor loss_sym_kl(const AttentionStack& attn, KlFrozen frozen, bool average = false);

// (1/(L-1)) sum_i (v_i - v_{i-1})^2 for v in {H, tau}, summed over layers.
Tensor loss_smoothness(const std::vector<PriorFields>& fields);
Tensor loss_smoothness(const PriorFields& fields);

// mean_i (H_i - target)^2, averaged over layers.
Tensor loss_hurst_distill(const std::vector<PriorFields>& fields, double target);
Tensor loss_hurst_distill(const PriorFields& fields, double target);

// Mean squared pre-softmax prior score over causal entries, averaged over
// layers and heads. Zero when there are no scores.
Tensor loss_prior_scores(const std::vector<std::vector<Tensor>>& scores);

struct PassLosses {
  Tensor total;
  Tensor recon;
  Tensor sym_kl;
  Tensor smooth;
  Tensor hurst;
  Tensor scores;
};

enum class Pass { kFirst, kSecond, kSingle };

// Builds the objective of one pass for a single window. Throws NumericError
// naming the first non-finite term.
PassLosses pass_losses(const ReconOutput& out, const Matrix& window, const TrainConfig& cfg,
                       double hurst_target, Pass pass);

// One two-pass (or single-loss) update over a batch of standardized windows.
LossBreakdown minmax_step(const std::vector<Matrix>& batch, PiTransformer& model,
                          OptimizerState& opt, const TrainConfig& cfg, double hurst_target);

// Mean reconstruction loss over the windows, no gradients.
double validation_loss(const PiTransformer& model, const std::vector<Matrix>& windows);

// Dataset-level Hurst target: mean of per-channel R/S estimates.
double dataset_hurst(const Series& series);

class EarlyStopping {
 public:
  explicit EarlyStopping(Index patience) : patience_(patience) {}
  // Records one validation loss. Returns true when the loss improved on the
  // best seen so far.
  bool update(double loss);
  bool should_stop() const { return bad_epochs_ >= patience_; }
  double best() const { return best_; }

 private:
  Index patience_;
  Index bad_epochs_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

struct StepLog {
  Index step = 0;
  LossBreakdown loss;
};

struct Checkpoint {
  PiTransformer model;
  TrainConfig train;
  OptimizerState optimizer;
  StandardizerStats standardizer;
  Index epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
  double hurst_target = 0.5;
};

struct TrainResult {
  Checkpoint checkpoint;  // best validation snapshot
  std::vector<StepLog> log;
  std::vector<double> val_history;  // one entry per evaluated epoch
  Index epochs_run = 0;
};

using EpochCallback = std::function<void(Index epoch, double val_loss, bool improved)>;

// Fits the standardizer on `train`, carves the validation tail, estimates the
// Hurst target and runs epochs of minmax_step with early stopping on the
// validation reconstruction loss.
TrainResult train(const Series& train, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const EpochCallback& on_epoch = {});

void write_training_log(const std::filesystem::path& path, const std::vector<StepLog>& log);
void write_training_log(std::ostream& os, const std::vector<StepLog>& log);

}  // namespace pit
