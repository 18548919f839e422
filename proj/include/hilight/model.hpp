#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hilight/common.hpp"
#include "hilight/matrix.hpp"
#include "hilight/numeric.hpp"
#include "hilight/rng.hpp"

namespace hilight {

struct ModelDims {
  int vocab = 0;
  int d_e = 0;
  int d_h = 0;
  int num_labels = 0;

  bool operator==(const ModelDims&) const = default;
};

/// Trainable scalar count: embedding table + encoder affine + head.
inline std::uint64_t param_count(int vocab, int d_e, int d_h, int num_labels) {
  if (vocab <= 0 || d_e <= 0 || d_h <= 0 || num_labels <= 0)
    fail(ErrorCode::InvalidConfig, "param_count requires positive dimensions");
  const auto v = static_cast<std::uint64_t>(vocab);
  const auto e = static_cast<std::uint64_t>(d_e);
  const auto h = static_cast<std::uint64_t>(d_h);
  const auto c = static_cast<std::uint64_t>(num_labels);
  return v * e + h * e + h + c * h + c;
}

/// Head share: one weight row plus one bias per label.
inline std::uint64_t head_param_count(int d_h, int num_labels) {
  if (d_h <= 0 || num_labels <= 0)
    fail(ErrorCode::InvalidConfig, "head_param_count requires positive dimensions");
  return static_cast<std::uint64_t>(d_h + 1) * static_cast<std::uint64_t>(num_labels);
}

/// All trainable tensors. Doubles as the gradient container (same shapes).
struct ModelParams {
  Matrix embeddings;             // vocab x d_e
  Matrix enc_weight;             // d_h x d_e
  std::vector<double> enc_bias;  // d_h
  Matrix head_weight;            // num_labels x d_h
  std::vector<double> head_bias; // num_labels

  ModelDims dims() const {
    return {embeddings.rows, embeddings.cols, enc_weight.rows, head_weight.rows};
  }

  std::uint64_t scalar_count() const {
    return embeddings.size() + enc_weight.size() + enc_bias.size() + head_weight.size() +
           head_bias.size();
  }

  static ModelParams zeros(const ModelDims& d) {
    ModelParams p;
    p.embeddings = Matrix(d.vocab, d.d_e);
    p.enc_weight = Matrix(d.d_h, d.d_e);
    p.enc_bias.assign(static_cast<std::size_t>(d.d_h), 0.0);
    p.head_weight = Matrix(d.num_labels, d.d_h);
    p.head_bias.assign(static_cast<std::size_t>(d.num_labels), 0.0);
    if (p.scalar_count() != param_count(d.vocab, d.d_e, d.d_h, d.num_labels))
      fail(ErrorCode::ShapeMismatch, "allocated scalars disagree with param_count");
    return p;
  }

  /// Seeded Glorot-style init; biases start at zero.
  static ModelParams init(const ModelDims& d, Rng& rng) {
    ModelParams p = zeros(d);
    const double emb_scale = std::sqrt(3.0 / d.d_e);
    for (double& x : p.embeddings.data) x = rng.uniform(-emb_scale, emb_scale);
    const double enc_scale = std::sqrt(6.0 / (d.d_e + d.d_h));
    for (double& x : p.enc_weight.data) x = rng.uniform(-enc_scale, enc_scale);
    const double head_scale = std::sqrt(6.0 / (d.d_h + d.num_labels));
    for (double& x : p.head_weight.data) x = rng.uniform(-head_scale, head_scale);
    return p;
  }

  bool all_finite() const {
    return hilight::all_finite(embeddings) && hilight::all_finite(enc_weight) &&
           hilight::all_finite(enc_bias) && hilight::all_finite(head_weight) &&
           hilight::all_finite(head_bias);
  }

  /// this += scale * other (elementwise over all tensors).
  void add_scaled(const ModelParams& other, double scale) {
    if (dims() != other.dims()) fail(ErrorCode::ShapeMismatch, "parameter shapes differ");
    auto axpy = [scale](std::vector<double>& dst, const std::vector<double>& src) {
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += scale * src[k];
    };
    axpy(embeddings.data, other.embeddings.data);
    axpy(enc_weight.data, other.enc_weight.data);
    axpy(enc_bias, other.enc_bias);
    axpy(head_weight.data, other.head_weight.data);
    axpy(head_bias, other.head_bias);
  }

  void scale(double s) {
    for_each_tensor([s](const char*, std::vector<double>& t, bool) {
      for (double& x : t) x *= s;
    });
  }

  /// Visits (name, tensor, is_encoder_group) for each trainable tensor,
  /// in a fixed order.
  template <class Fn>
  void for_each_tensor(Fn fn) {
    fn("embeddings", embeddings.data, true);
    fn("enc_weight", enc_weight.data, true);
    fn("enc_bias", enc_bias, true);
    fn("head_weight", head_weight.data, false);
    fn("head_bias", head_bias, false);
  }
  template <class Fn>
  void for_each_tensor(Fn fn) const {
    fn("embeddings", embeddings.data, true);
    fn("enc_weight", enc_weight.data, true);
    fn("enc_bias", enc_bias, true);
    fn("head_weight", head_weight.data, false);
    fn("head_bias", head_bias, false);
  }
};

struct PredictConfig {
  double threshold = 0.5;

  void validate() const {
    if (!(threshold > 0.0 && threshold < 1.0))
      fail(ErrorCode::InvalidConfig, "threshold must lie in (0, 1)");
  }
};

/// Everything the backward pass needs from one forward pass.
struct ForwardTrace {
  std::vector<int> token_ids;          // empty in precomputed mode
  std::vector<double> mean_embedding;  // d_e; empty in precomputed mode
  std::vector<double> hidden;          // d_h, pre-dropout
  std::vector<double> dropout_mask;    // d_h; entries 0 or 1/(1-rate)
  std::vector<double> logits;          // num_labels
  std::vector<double> probabilities;   // num_labels, open interval (0,1)
  bool training = false;
  bool precomputed = false;
};

namespace detail {

inline void finish_trace(const ModelParams& params, ForwardTrace& trace, double dropout_rate,
                         Rng& rng, bool training) {
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    fail(ErrorCode::InvalidConfig, "dropout rate must lie in [0, 1)");
  const int d_h = params.enc_weight.rows;
  const int c = params.head_weight.rows;

  trace.training = training;
  trace.dropout_mask.assign(static_cast<std::size_t>(d_h), 1.0);
  if (training && dropout_rate > 0.0) {
    const double keep_scale = 1.0 / (1.0 - dropout_rate);
    for (int j = 0; j < d_h; ++j)
      trace.dropout_mask[j] = rng.real01() < dropout_rate ? 0.0 : keep_scale;
  }

  trace.logits.assign(static_cast<std::size_t>(c), 0.0);
  trace.probabilities.assign(static_cast<std::size_t>(c), 0.0);
  for (int i = 0; i < c; ++i) {
    const double* w = params.head_weight.row(i);
    double z = params.head_bias[i];
    for (int j = 0; j < d_h; ++j) z += w[j] * trace.hidden[j] * trace.dropout_mask[j];
    trace.logits[i] = z;
    trace.probabilities[i] = stable_sigmoid(z);
  }
}

}  // namespace detail

/// Mean-of-embeddings -> affine -> tanh encoder, then the classification
/// head with inverted dropout. Deterministic given (params, tokens, rng).
inline ForwardTrace encode(const ModelParams& params, const std::vector<int>& token_ids,
                           double dropout_rate, Rng& rng, bool training) {
  if (token_ids.empty()) fail(ErrorCode::EmptyDocument, "cannot encode an empty token sequence");
  const int vocab = params.embeddings.rows;
  const int d_e = params.embeddings.cols;
  const int d_h = params.enc_weight.rows;

  ForwardTrace trace;
  trace.token_ids = token_ids;
  trace.mean_embedding.assign(static_cast<std::size_t>(d_e), 0.0);
  for (int t : token_ids) {
    if (t < 0 || t >= vocab)
      fail(ErrorCode::TokenOutOfVocab, "token id " + std::to_string(t) + " outside vocab of size " +
                                           std::to_string(vocab));
    const double* row = params.embeddings.row(t);
    for (int j = 0; j < d_e; ++j) trace.mean_embedding[j] += row[j];
  }
  const double inv_n = 1.0 / static_cast<double>(token_ids.size());
  for (double& x : trace.mean_embedding) x *= inv_n;

  trace.hidden.assign(static_cast<std::size_t>(d_h), 0.0);
  for (int r = 0; r < d_h; ++r) {
    const double* w = params.enc_weight.row(r);
    double acc = params.enc_bias[r];
    for (int j = 0; j < d_e; ++j) acc += w[j] * trace.mean_embedding[j];
    trace.hidden[r] = std::tanh(acc);
  }

  detail::finish_trace(params, trace, dropout_rate, rng, training);
  return trace;
}

/// Ingestion path for externally produced document vectors: the feature
/// replaces the encoder's hidden state, everything downstream is identical.
inline ForwardTrace encode_precomputed(const ModelParams& params, const std::vector<double>& feature,
                                       double dropout_rate, Rng& rng, bool training) {
  const int d_h = params.enc_weight.rows;
  if (static_cast<int>(feature.size()) != d_h)
    fail(ErrorCode::DimensionMismatch, "feature length " + std::to_string(feature.size()) +
                                           " != d_h " + std::to_string(d_h));
  ForwardTrace trace;
  trace.precomputed = true;
  trace.hidden = feature;
  detail::finish_trace(params, trace, dropout_rate, rng, training);
  return trace;
}

/// Raw thresholding per the sigmoid outputs; no parent-closure is enforced,
/// so consistency violations stay measurable downstream.
inline std::vector<LabelId> predict(const ForwardTrace& trace, const PredictConfig& cfg) {
  cfg.validate();
  std::vector<LabelId> out;
  for (std::size_t i = 0; i < trace.probabilities.size(); ++i)
    if (trace.probabilities[i] >= cfg.threshold) out.push_back(static_cast<LabelId>(i));
  return out;
}

/// Exact reverse-mode gradients for one trace. Embeddings of absent tokens
/// receive zero gradient; precomputed traces stop at the hidden state.
inline ModelParams backward(const ForwardTrace& trace, const std::vector<double>& grad_logits,
                            const ModelParams& params) {
  const ModelDims d = params.dims();
  if (static_cast<int>(grad_logits.size()) != d.num_labels)
    fail(ErrorCode::ShapeMismatch, "grad_logits length != num_labels");
  if (static_cast<int>(trace.hidden.size()) != d.d_h ||
      trace.dropout_mask.size() != trace.hidden.size())
    fail(ErrorCode::ShapeMismatch, "trace hidden state does not match model dims");
  if (!trace.precomputed && static_cast<int>(trace.mean_embedding.size()) != d.d_e)
    fail(ErrorCode::ShapeMismatch, "trace mean embedding does not match model dims");

  ModelParams grads = ModelParams::zeros(d);
  std::vector<double> grad_masked(static_cast<std::size_t>(d.d_h), 0.0);
  for (int i = 0; i < d.num_labels; ++i) {
    const double g = grad_logits[i];
    if (g == 0.0) continue;
    grads.head_bias[i] += g;
    const double* w = params.head_weight.row(i);
    double* gw = grads.head_weight.row(i);
    for (int j = 0; j < d.d_h; ++j) {
      gw[j] += g * trace.hidden[j] * trace.dropout_mask[j];
      grad_masked[j] += g * w[j];
    }
  }

  if (trace.precomputed) return grads;

  std::vector<double> grad_pre(static_cast<std::size_t>(d.d_h));
  for (int j = 0; j < d.d_h; ++j) {
    const double grad_hidden = grad_masked[j] * trace.dropout_mask[j];
    grad_pre[j] = grad_hidden * (1.0 - trace.hidden[j] * trace.hidden[j]);
  }

  std::vector<double> grad_mean(static_cast<std::size_t>(d.d_e), 0.0);
  for (int r = 0; r < d.d_h; ++r) {
    const double g = grad_pre[r];
    grads.enc_bias[r] += g;
    if (g == 0.0) continue;
    const double* w = params.enc_weight.row(r);
    double* gw = grads.enc_weight.row(r);
    for (int j = 0; j < d.d_e; ++j) {
      gw[j] += g * trace.mean_embedding[j];
      grad_mean[j] += g * w[j];
    }
  }

  const double inv_n = 1.0 / static_cast<double>(trace.token_ids.size());
  for (int t : trace.token_ids) {
    double* row = grads.embeddings.row(t);
    for (int j = 0; j < d.d_e; ++j) row[j] += grad_mean[j] * inv_n;
  }
  return grads;
}

/// FNV-1a over the id-ordered token list; checked on checkpoint load.
inline std::uint64_t vocab_fingerprint(const std::vector<std::string>& tokens) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto eat = [&h](unsigned char byte) {
    h ^= byte;
    h *= 0x100000001b3ULL;
  };
  for (const std::string& t : tokens) {
    for (char c : t) eat(static_cast<unsigned char>(c));
    eat('\n');
  }
  return h;
}

struct Checkpoint {
  ModelParams params;
  std::vector<std::string> vocab;  // tokens in id order
};

inline void save_checkpoint(std::ostream& out, const ModelParams& params,
                            const std::vector<std::string>& vocab) {
  const ModelDims d = params.dims();
  nlohmann::json j{
      {"format_version", 1},
      {"dims",
       {{"vocab", d.vocab}, {"d_e", d.d_e}, {"d_h", d.d_h}, {"num_labels", d.num_labels}}},
      {"vocab_fingerprint", vocab_fingerprint(vocab)},
      {"vocab", vocab},
      {"embeddings", params.embeddings.data},
      {"enc_weight", params.enc_weight.data},
      {"enc_bias", params.enc_bias},
      {"head_weight", params.head_weight.data},
      {"head_bias", params.head_bias},
  };
  out << j.dump() << '\n';
}

inline Checkpoint load_checkpoint(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::IoError, std::string("cannot parse checkpoint: ") + e.what());
  }
  if (j.value("format_version", 0) != 1)
    fail(ErrorCode::IoError, "unsupported checkpoint format version");

  Checkpoint ckpt;
  const auto& dims = j.at("dims");
  const ModelDims d{dims.at("vocab").get<int>(), dims.at("d_e").get<int>(),
                    dims.at("d_h").get<int>(), dims.at("num_labels").get<int>()};
  ckpt.params = ModelParams::zeros(d);
  ckpt.vocab = j.at("vocab").get<std::vector<std::string>>();

  if (static_cast<int>(ckpt.vocab.size()) != d.vocab)
    fail(ErrorCode::DimensionMismatch, "checkpoint vocab list does not match declared size");
  if (j.at("vocab_fingerprint").get<std::uint64_t>() != vocab_fingerprint(ckpt.vocab))
    fail(ErrorCode::DimensionMismatch, "checkpoint vocab fingerprint mismatch");

  auto load_vec = [&j](const char* key, std::vector<double>& dst) {
    std::vector<double> v = j.at(key).get<std::vector<double>>();
    if (v.size() != dst.size())
      fail(ErrorCode::DimensionMismatch, std::string("checkpoint tensor '") + key +
                                             "' does not match declared dims");
    dst = std::move(v);
  };
  load_vec("embeddings", ckpt.params.embeddings.data);
  load_vec("enc_weight", ckpt.params.enc_weight.data);
  load_vec("enc_bias", ckpt.params.enc_bias);
  load_vec("head_weight", ckpt.params.head_weight.data);
  load_vec("head_bias", ckpt.params.head_bias);
  return ckpt;
}

}  // namespace hilight
