// SPDX-License-Identifier: Apache-2.0
//
// Dual-pathway transformer encoder. Each encoder layer produces, per head, a
// data-driven series attention S (causal scaled dot-product) and a prior
// attention P built from a convex mixture of three lag kernels:
//
//   fractal   -(2 - 2 H_i) ln(1 + d)          H_i in (0, 1), per position
//   gaussian  -d^2 / (2 tau_i^2)              tau_i > 0,     per position
//   phase     kappa_h cos(2 pi d / p_h)       per head
//
// with lag d = i - j >= 0, mixed by per-head weights (alpha_f, alpha_g,
// alpha_p) and normalized with a causal row softmax. H_i and tau_i come from
// a small per-position head that reads the layer's normalized features
// through a stop-gradient, so the prior pathway never back-propagates into the
// encoder. Only S feeds the context used for reconstruction.
#pragma once

#include "pit/tensor.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace pit {

enum class PriorMode {
  kFull,        // learned prior, one set of kernel weights per head
  kNoPhase,     // prior replaced by the causal-uniform distribution
  kSingleHead,  // one prior shared by every series head
};

std::string to_string(PriorMode mode);
PriorMode prior_mode_from_string(const std::string& name);

struct ModelConfig {
  Index window_length = 100;
  Index channels = 1;
  Index model_dim = 512;
  Index num_layers = 3;
  Index num_heads = 8;
  Index feedforward_dim = 512;
  Index prior_hidden = 16;
  double dropout = 0.0;
  std::uint64_t seed = 0;
  PriorMode prior_mode = PriorMode::kFull;

  Index attention_dim() const { return model_dim / num_heads; }
  // Throws ConfigError on any violated invariant.
  void validate() const;
};

// Prior parameters of one layer. mixing holds one 1x3 row (alpha_f, alpha_g,
// alpha_p) per prior head; period and phase_gain hold one 1x1 tensor each.
struct PriorFields {
  Tensor hurst;      // L x 1, in (0, 1)
  Tensor stiffness;  // L x 1, > 0
  std::vector<Tensor> mixing;
  std::vector<Tensor> period;
  std::vector<Tensor> phase_gain;
};

// series[l][h] and prior[l][h] are L x L row-stochastic and causal.
struct AttentionStack {
  std::vector<std::vector<Tensor>> series;
  std::vector<std::vector<Tensor>> prior;

  std::size_t num_layers() const { return series.size(); }
  std::size_t num_heads() const { return series.empty() ? 0 : series.front().size(); }
};

struct ReconOutput {
  Tensor recon;  // L x C
  AttentionStack attn;
  std::vector<PriorFields> fields;  // one per layer
  // Pre-softmax prior scores per layer and head (empty for kNoPhase).
  std::vector<std::vector<Tensor>> prior_scores;
};

// Builds one prior attention matrix per entry of fields.mixing. When scores is
// non-null the pre-softmax logits are appended to it. Throws NumericError
// naming the kernel if any kernel value is not finite.
std::vector<Tensor> prior_attention(const PriorFields& fields, Index length,
                                    std::vector<Tensor>* scores = nullptr);

// Causal-uniform row-stochastic matrix: row i is 1/(i+1) over 0..i.
Matrix causal_uniform(Index length);

// Fixed sinusoidal position encoding, length x dim.
Matrix sinusoidal_encoding(Index length, Index dim);

struct Parameter {
  std::string name;
  Tensor tensor;
  bool prior = false;  // belongs to the prior pathway
};

class PiTransformer {
 public:
  explicit PiTransformer(ModelConfig config);

  PiTransformer(const PiTransformer&) = delete;
  PiTransformer& operator=(const PiTransformer&) = delete;
  PiTransformer(PiTransformer&&) = default;
  PiTransformer& operator=(PiTransformer&&) = default;

  // Deep copy with independent parameter storage.
  PiTransformer clone() const;

  const ModelConfig& config() const { return config_; }

  // Linear channel projection plus positional encoding, L x model_dim.
  Tensor embed_window(const Matrix& window) const;

  struct SeriesOutput {
    std::vector<Tensor> attention;  // per head
    Tensor context;                 // L x model_dim after output projection
  };
  SeriesOutput series_attention(const Tensor& features, Index layer) const;

  // H, tau and kernel weights of one layer from its (normalized) features.
  PriorFields prior_fields(const Tensor& features, Index layer) const;

  // Pure function of the parameters and the window.
  ReconOutput forward(const Matrix& window) const;
  // As forward, with dropout active when config().dropout > 0.
  ReconOutput forward_training(const Matrix& window);

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Tensor> tensors();
  std::vector<Tensor> series_tensors();
  std::vector<Tensor> prior_tensors();
  // nullptr when absent.
  Tensor* find(const std::string& name);

  void zero_grad();

  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);

 private:
  struct Layer {
    Tensor ln1_gain, ln1_bias;
    std::vector<Tensor> wq, wk, wv, wo;
    Tensor out_bias;
    Tensor ln2_gain, ln2_bias;
    Tensor ff_w1, ff_b1, ff_w2, ff_b2;
    Tensor prior_w1, prior_b1, hurst_w, hurst_b, stiff_w, stiff_b;
    std::vector<Tensor> mix_logits, period_raw, gain_raw;
  };

  ReconOutput run(const Matrix& window, std::mt19937_64* dropout_rng) const;
  Tensor& add_param(const std::string& name, Matrix value, bool prior);

  ModelConfig config_;
  std::vector<Parameter> params_;
  Tensor embed_w_;
  std::vector<Layer> layers_;
  Tensor final_gain_, final_bias_;
  Tensor head_w_, head_b_;
  Matrix positional_;
  Matrix log_lag_;       // ln(1 + d), zero above the diagonal
  Matrix half_sq_lag_;   // d^2 / 2, zero above the diagonal
  std::mt19937_64 dropout_rng_;
};

struct HurstEstimate {
  double value = 0.5;
  bool degenerate = false;  // zero-variance input, value fixed at 0.5
};

// Rescaled-range estimate: 1/2 plus the slope of log mean(R/S) - log E[R/S]
// against log block size over num_scales logarithmically spaced block sizes
// between min_block and T/2, where E[R/S] is the Anis-Lloyd expectation for
// i.i.d. Gaussian noise. Clamped to [0.01, 0.99]. Requires T >= 4 * min_block.
HurstEstimate estimate_hurst_rs(const Eigen::Ref<const Vector>& series, Index min_block = 16,
                                Index num_scales = 8);

}  // namespace pit
