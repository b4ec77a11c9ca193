// SPDX-License-Identifier: Apache-2.0
#include "pit/model.hpp"

#include "pit/error.hpp"
#include "pit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pit {

std::string to_string(PriorMode mode) {
  switch (mode) {
    case PriorMode::kFull:
      return "full";
    case PriorMode::kNoPhase:
      return "no_phase";
    case PriorMode::kSingleHead:
      return "single_head";
  }
  return "full";
}

PriorMode prior_mode_from_string(const std::string& name) {
  if (name == "full") return PriorMode::kFull;
  if (name == "no_phase") return PriorMode::kNoPhase;
  if (name == "single_head") return PriorMode::kSingleHead;
  throw ConfigError("unknown prior mode '" + name + "' (expected full, no_phase, single_head)");
}

void ModelConfig::validate() const {
  auto positive = [](Index v, const char* name) {
    if (v <= 0) throw ConfigError(std::string("model.") + name + " must be positive");
  };
  positive(window_length, "window_length");
  positive(channels, "channels");
  positive(model_dim, "model_dim");
  positive(num_layers, "num_layers");
  positive(num_heads, "num_heads");
  positive(feedforward_dim, "feedforward_dim");
  positive(prior_hidden, "prior_hidden");
  if (model_dim % num_heads != 0) {
    throw ConfigError("model.model_dim (" + std::to_string(model_dim) +
                      ") must be divisible by model.num_heads (" + std::to_string(num_heads) + ")");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout must be in [0, 1)");
}

Matrix causal_uniform(Index length) {
  Matrix m = Matrix::Zero(length, length);
  for (Index i = 0; i < length; ++i) m.row(i).head(i + 1).setConstant(1.0 / double(i + 1));
  return m;
}

Matrix sinusoidal_encoding(Index length, Index dim) {
  Matrix pe(length, dim);
  for (Index pos = 0; pos < length; ++pos) {
    for (Index k = 0; k < dim; ++k) {
      const double rate = std::pow(10000.0, -double(2 * (k / 2)) / double(dim));
      const double angle = double(pos) * rate;
      pe(pos, k) = (k % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

namespace {

Matrix lag_matrix(Index length, double (*f)(double)) {
  Matrix m = Matrix::Zero(length, length);
  for (Index i = 0; i < length; ++i) {
    for (Index j = 0; j <= i; ++j) m(i, j) = f(double(i - j));
  }
  return m;
}

void require_finite(const Tensor& t, const char* kernel) {
  if (!t.value().allFinite()) {
    throw NumericError(std::string("prior_attention: non-finite value in the ") + kernel +
                       " kernel");
  }
}

Matrix xavier(Index fan_in, Index fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(fan_in, fan_out);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

double inverse_softplus(double y) { return std::log(std::expm1(y)); }

std::vector<Tensor> prior_attention_with(const PriorFields& fields, const Matrix& log_lag,
                                         const Matrix& half_sq_lag, std::vector<Tensor>* scores) {
  const Index length = log_lag.rows();
  if (fields.hurst.rows() != length || fields.stiffness.rows() != length) {
    throw DimensionError("prior_attention: fields cover " + fields.hurst.shape_string() +
                         " positions, window length is " + std::to_string(length));
  }
  // -(2 - 2H_i) ln(1 + d) and -d^2 / (2 tau_i^2), shared by all heads.
  Tensor fractal = row_scale(Tensor(log_lag), add_scalar(scale(fields.hurst, 2.0), -2.0));
  require_finite(fractal, "fractal");
  Tensor gaussian =
      row_scale(Tensor(half_sq_lag), scale(square(reciprocal(fields.stiffness)), -1.0));
  require_finite(gaussian, "gaussian");

  std::vector<Tensor> out;
  out.reserve(fields.mixing.size());
  for (std::size_t h = 0; h < fields.mixing.size(); ++h) {
    Tensor phase = mul_scalar(fields.phase_gain[h], lag_cosine(fields.period[h], length));
    require_finite(phase, "phase");
    const Tensor& mix = fields.mixing[h];
    Tensor logits = add(add(mul_scalar(element(mix, 0, 0), fractal),
                            mul_scalar(element(mix, 0, 1), gaussian)),
                        mul_scalar(element(mix, 0, 2), phase));
    if (scores != nullptr) scores->push_back(logits);
    out.push_back(causal_softmax_rows(logits));
  }
  return out;
}

double log_lag_fn(double d) { return std::log1p(d); }
double half_sq_lag_fn(double d) { return 0.5 * d * d; }

}  // namespace

std::vector<Tensor> prior_attention(const PriorFields& fields, Index length,
                                    std::vector<Tensor>* scores) {
  return prior_attention_with(fields, lag_matrix(length, log_lag_fn),
                              lag_matrix(length, half_sq_lag_fn), scores);
}

PiTransformer::PiTransformer(ModelConfig config)
    : config_(std::move(config)), dropout_rng_(config_.seed ^ 0x9e3779b97f4a7c15ULL) {
  config_.validate();
  const Index L = config_.window_length;
  const Index D = config_.model_dim;
  const Index d = config_.attention_dim();
  const Index F = config_.feedforward_dim;
  const Index Hd = config_.prior_hidden;
  const Index prior_heads = config_.prior_mode == PriorMode::kSingleHead ? 1 : config_.num_heads;
  std::mt19937_64 rng(config_.seed);

  positional_ = sinusoidal_encoding(L, D);
  log_lag_ = lag_matrix(L, log_lag_fn);
  half_sq_lag_ = lag_matrix(L, half_sq_lag_fn);

  embed_w_ = add_param("embed.weight", xavier(config_.channels, D, rng), false);
  const double tau0 = std::max(1.0, double(L) / 10.0);
  const double log_lo = std::log(4.0);
  const double log_hi = std::log(std::max(5.0, double(L)));
  std::uniform_real_distribution<double> log_period(log_lo, log_hi);

  for (Index l = 0; l < config_.num_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Layer layer;
    layer.ln1_gain = add_param(p + "ln1.gain", Matrix::Ones(1, D), false);
    layer.ln1_bias = add_param(p + "ln1.bias", Matrix::Zero(1, D), false);
    for (Index h = 0; h < config_.num_heads; ++h) {
      const std::string hp = p + "attn.head" + std::to_string(h) + ".";
      layer.wq.push_back(add_param(hp + "query", xavier(D, d, rng), false));
      layer.wk.push_back(add_param(hp + "key", xavier(D, d, rng), false));
      layer.wv.push_back(add_param(hp + "value", xavier(D, d, rng), false));
      layer.wo.push_back(add_param(hp + "output", xavier(d, D, rng), false));
    }
    layer.out_bias = add_param(p + "attn.output_bias", Matrix::Zero(1, D), false);
    layer.ln2_gain = add_param(p + "ln2.gain", Matrix::Ones(1, D), false);
    layer.ln2_bias = add_param(p + "ln2.bias", Matrix::Zero(1, D), false);
    layer.ff_w1 = add_param(p + "ff.w1", xavier(D, F, rng), false);
    layer.ff_b1 = add_param(p + "ff.b1", Matrix::Zero(1, F), false);
    layer.ff_w2 = add_param(p + "ff.w2", xavier(F, D, rng), false);
    layer.ff_b2 = add_param(p + "ff.b2", Matrix::Zero(1, D), false);

    layer.prior_w1 = add_param(p + "prior.w1", xavier(D, Hd, rng), true);
    layer.prior_b1 = add_param(p + "prior.b1", Matrix::Zero(1, Hd), true);
    layer.hurst_w = add_param(p + "prior.hurst_w", 0.1 * xavier(Hd, 1, rng), true);
    layer.hurst_b = add_param(p + "prior.hurst_b", Matrix::Zero(1, 1), true);
    layer.stiff_w = add_param(p + "prior.stiffness_w", 0.1 * xavier(Hd, 1, rng), true);
    layer.stiff_b =
        add_param(p + "prior.stiffness_b", Matrix::Constant(1, 1, inverse_softplus(tau0 - 0.5)), true);
    for (Index h = 0; h < prior_heads; ++h) {
      const std::string hp = p + "prior.head" + std::to_string(h) + ".";
      layer.mix_logits.push_back(add_param(hp + "mix_logits", Matrix::Zero(1, 3), true));
      const double period = std::exp(log_period(rng));
      layer.period_raw.push_back(
          add_param(hp + "period_raw", Matrix::Constant(1, 1, std::log(period - 1.0)), true));
      layer.gain_raw.push_back(add_param(hp + "gain_raw", Matrix::Zero(1, 1), true));
    }
    layers_.push_back(std::move(layer));
  }
  final_gain_ = add_param("final_ln.gain", Matrix::Ones(1, D), false);
  final_bias_ = add_param("final_ln.bias", Matrix::Zero(1, D), false);
  head_w_ = add_param("head.weight", xavier(D, config_.channels, rng), false);
  head_b_ = add_param("head.bias", Matrix::Zero(1, config_.channels), false);
}

Tensor& PiTransformer::add_param(const std::string& name, Matrix value, bool prior) {
  params_.push_back(Parameter{name, Tensor(std::move(value), true), prior});
  return params_.back().tensor;
}

PiTransformer PiTransformer::clone() const {
  PiTransformer copy(config_);
  copy.restore(snapshot());
  copy.dropout_rng_ = dropout_rng_;
  return copy;
}

Tensor PiTransformer::embed_window(const Matrix& window) const {
  if (window.cols() != config_.channels) {
    throw ConfigError("embed_window: window has " + std::to_string(window.cols()) +
                      " channels, model expects " + std::to_string(config_.channels));
  }
  if (window.rows() != config_.window_length) {
    throw ConfigError("embed_window: window has " + std::to_string(window.rows()) +
                      " rows, model expects " + std::to_string(config_.window_length));
  }
  return add(matmul(Tensor(window), embed_w_), Tensor(positional_));
}

PiTransformer::SeriesOutput PiTransformer::series_attention(const Tensor& features,
                                                            Index layer) const {
  const Layer& ly = layers_.at(layer);
  const double inv_sqrt_d = 1.0 / std::sqrt(double(config_.attention_dim()));
  SeriesOutput out;
  Tensor context;
  for (Index h = 0; h < config_.num_heads; ++h) {
    Tensor q = matmul(features, ly.wq[h]);
    Tensor k = matmul(features, ly.wk[h]);
    Tensor v = matmul(features, ly.wv[h]);
    Tensor s = causal_softmax_rows(scale(matmul_nt(q, k), inv_sqrt_d));
    out.attention.push_back(s);
    Tensor head_out = matmul(matmul(s, v), ly.wo[h]);
    context = context.defined() ? add(context, head_out) : head_out;
  }
  out.context = add_row(context, ly.out_bias);
  return out;
}

PriorFields PiTransformer::prior_fields(const Tensor& features, Index layer) const {
  const Layer& ly = layers_.at(layer);
  PriorFields f;
  Tensor z = tanh(add_row(matmul(stop_gradient(features), ly.prior_w1), ly.prior_b1));
  f.hurst = sigmoid(add_row(matmul(z, ly.hurst_w), ly.hurst_b));
  f.stiffness = add_scalar(softplus(add_row(matmul(z, ly.stiff_w), ly.stiff_b)), 0.5);
  for (std::size_t h = 0; h < ly.mix_logits.size(); ++h) {
    f.mixing.push_back(softmax_rows(ly.mix_logits[h]));
    f.period.push_back(add_scalar(exp(ly.period_raw[h]), 1.0));
    f.phase_gain.push_back(softplus(ly.gain_raw[h]));
  }
  return f;
}

ReconOutput PiTransformer::run(const Matrix& window, std::mt19937_64* dropout_rng) const {
  const Index L = config_.window_length;
  const double rate = dropout_rng != nullptr ? config_.dropout : 0.0;
  ReconOutput out;
  Tensor x = embed_window(window);
  if (dropout_rng != nullptr) x = dropout(x, rate, *dropout_rng);
  const Tensor uniform(causal_uniform(L));
  for (Index l = 0; l < config_.num_layers; ++l) {
    const Layer& ly = layers_[std::size_t(l)];
    Tensor normed = layer_norm(x, ly.ln1_gain, ly.ln1_bias);
    SeriesOutput series = series_attention(normed, l);
    PriorFields fields = prior_fields(normed, l);

    std::vector<Tensor> prior;
    std::vector<Tensor> scores;
    switch (config_.prior_mode) {
      case PriorMode::kNoPhase:
        prior.assign(std::size_t(config_.num_heads), uniform);
        break;
      case PriorMode::kSingleHead: {
        std::vector<Tensor> shared = prior_attention_with(fields, log_lag_, half_sq_lag_, &scores);
        prior.assign(std::size_t(config_.num_heads), shared.front());
        scores.assign(std::size_t(config_.num_heads), scores.front());
        break;
      }
      case PriorMode::kFull:
        prior = prior_attention_with(fields, log_lag_, half_sq_lag_, &scores);
        break;
    }

    Tensor context = series.context;
    if (dropout_rng != nullptr) context = dropout(context, rate, *dropout_rng);
    x = add(x, context);
    Tensor hidden = gelu(add_row(matmul(layer_norm(x, ly.ln2_gain, ly.ln2_bias), ly.ff_w1), ly.ff_b1));
    Tensor ff = add_row(matmul(hidden, ly.ff_w2), ly.ff_b2);
    if (dropout_rng != nullptr) ff = dropout(ff, rate, *dropout_rng);
    x = add(x, ff);

    out.attn.series.push_back(std::move(series.attention));
    out.attn.prior.push_back(std::move(prior));
    out.fields.push_back(std::move(fields));
    out.prior_scores.push_back(std::move(scores));
  }
  out.recon = add_row(matmul(layer_norm(x, final_gain_, final_bias_), head_w_), head_b_);
  return out;
}

ReconOutput PiTransformer::forward(const Matrix& window) const { return run(window, nullptr); }

ReconOutput PiTransformer::forward_training(const Matrix& window) {
  return run(window, config_.dropout > 0.0 ? &dropout_rng_ : nullptr);
}

std::vector<Tensor> PiTransformer::tensors() {
  std::vector<Tensor> out;
  for (const Parameter& p : params_) out.push_back(p.tensor);
  return out;
}

std::vector<Tensor> PiTransformer::series_tensors() {
  std::vector<Tensor> out;
  for (const Parameter& p : params_) {
    if (!p.prior) out.push_back(p.tensor);
  }
  return out;
}

std::vector<Tensor> PiTransformer::prior_tensors() {
  std::vector<Tensor> out;
  for (const Parameter& p : params_) {
    if (p.prior) out.push_back(p.tensor);
  }
  return out;
}

Tensor* PiTransformer::find(const std::string& name) {
  for (Parameter& p : params_) {
    if (p.name == name) return &p.tensor;
  }
  return nullptr;
}

void PiTransformer::zero_grad() {
  for (Parameter& p : params_) p.tensor.zero_grad();
}

std::vector<Matrix> PiTransformer::snapshot() const {
  std::vector<Matrix> out;
  out.reserve(params_.size());
  for (const Parameter& p : params_) out.push_back(p.tensor.value());
  return out;
}

void PiTransformer::restore(const std::vector<Matrix>& values) {
  if (values.size() != params_.size()) {
    throw DimensionError("restore: expected " + std::to_string(params_.size()) +
                         " parameters, got " + std::to_string(values.size()));
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& t = params_[k].tensor;
    if (values[k].rows() != t.rows() || values[k].cols() != t.cols()) {
      throw DimensionError("restore: parameter " + params_[k].name + " expects " +
                           t.shape_string() + ", got " +
                           shape_string(values[k].rows(), values[k].cols()));
    }
    t.mutable_value() = values[k];
  }
}

}  // namespace pit
