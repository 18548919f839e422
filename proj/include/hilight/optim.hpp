#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "hilight/common.hpp"
#include "hilight/data.hpp"
#include "hilight/losses.hpp"
#include "hilight/metrics.hpp"
#include "hilight/model.hpp"
#include "hilight/rng.hpp"
#include "hilight/sampling.hpp"

namespace hilight {

enum class PlateauRule { neither, either };

struct TrainConfig {
  int epochs = 100;
  double lr_encoder = 2e-5;
  double lr_head = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int plateau_patience = 5;
  double plateau_factor = 0.8;
  PlateauRule plateau_rule = PlateauRule::neither;
  std::uint64_t seed = 2023;
  int batch_size = 16;
  int d_e = 64;
  int d_h = 64;
  double dropout_rate = 0.1;
  LossConfig loss;
  ScheduleConfig schedule;
  NegativeMode negatives;
  PredictConfig predict;

  void validate() const {
    if (epochs < 1) fail(ErrorCode::InvalidConfig, "epochs must be >= 1");
    if (lr_encoder <= 0.0 || lr_head <= 0.0) fail(ErrorCode::InvalidConfig, "learning rates must be > 0");
    if (plateau_patience < 1) fail(ErrorCode::InvalidConfig, "plateau patience must be >= 1");
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0))
      fail(ErrorCode::InvalidConfig, "plateau factor must lie in (0, 1)");
    if (batch_size < 1) fail(ErrorCode::InvalidConfig, "batch size must be >= 1");
    if (d_e < 1 || d_h < 1) fail(ErrorCode::InvalidConfig, "model dims must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      fail(ErrorCode::InvalidConfig, "dropout rate must lie in [0, 1)");
    loss.validate();
    schedule.validate();
    predict.validate();
  }
};

/// Adam accumulators plus the current per-group learning rates.
struct OptimizerState {
  ModelParams m;
  ModelParams v;
  long long step = 0;
  double lr_encoder = 0.0;
  double lr_head = 0.0;

  static OptimizerState init(const ModelDims& dims, const TrainConfig& cfg) {
    OptimizerState state;
    state.m = ModelParams::zeros(dims);
    state.v = ModelParams::zeros(dims);
    state.lr_encoder = cfg.lr_encoder;
    state.lr_head = cfg.lr_head;
    return state;
  }
};

/// One bias-corrected Adam update; encoder and head groups use their own
/// learning rates. Rejects non-finite gradients outright.
inline void adam_step(ModelParams& params, const ModelParams& grads, OptimizerState& state,
                      const TrainConfig& cfg) {
  grads.for_each_tensor([&](const char* name, const std::vector<double>& g, bool) {
    for (std::size_t k = 0; k < g.size(); ++k)
      if (!std::isfinite(g[k]))
        fail(ErrorCode::NonFiniteGradient,
             std::string("tensor '") + name + "' entry " + std::to_string(k) + " is " +
                 std::to_string(g[k]));
  });

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.step));

  auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                    std::vector<double>& v, double lr) {
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = cfg.adam_beta1 * m[k] + (1.0 - cfg.adam_beta1) * g[k];
      v[k] = cfg.adam_beta2 * v[k] + (1.0 - cfg.adam_beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      p[k] -= lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  };

  update(params.embeddings.data, grads.embeddings.data, state.m.embeddings.data,
         state.v.embeddings.data, state.lr_encoder);
  update(params.enc_weight.data, grads.enc_weight.data, state.m.enc_weight.data,
         state.v.enc_weight.data, state.lr_encoder);
  update(params.enc_bias, grads.enc_bias, state.m.enc_bias, state.v.enc_bias, state.lr_encoder);
  update(params.head_weight.data, grads.head_weight.data, state.m.head_weight.data,
         state.v.head_weight.data, state.lr_head);
  update(params.head_bias, grads.head_bias, state.m.head_bias, state.v.head_bias, state.lr_head);
}

struct PlateauState {
  double best_micro = -1.0;
  double best_macro = -1.0;
  int stagnant = 0;
  int stagnant_micro = 0;
  int stagnant_macro = 0;
};

/// Decays both group learning rates by plateau_factor once the dev metrics
/// stall. Under `neither` (default) an improvement in either metric resets
/// the clock; under `either` each metric runs its own clock and the first
/// one to stall triggers the decay. Bests and counters reset after a decay.
inline bool plateau_scheduler(double dev_micro, double dev_macro, PlateauState& ps,
                              OptimizerState& opt, const TrainConfig& cfg) {
  const bool micro_up = dev_micro > ps.best_micro;
  const bool macro_up = dev_macro > ps.best_macro;
  ps.best_micro = std::max(ps.best_micro, dev_micro);
  ps.best_macro = std::max(ps.best_macro, dev_macro);

  if (micro_up || macro_up)
    ps.stagnant = 0;
  else
    ++ps.stagnant;
  ps.stagnant_micro = micro_up ? 0 : ps.stagnant_micro + 1;
  ps.stagnant_macro = macro_up ? 0 : ps.stagnant_macro + 1;

  const bool decay = cfg.plateau_rule == PlateauRule::neither
                         ? ps.stagnant >= cfg.plateau_patience
                         : ps.stagnant_micro >= cfg.plateau_patience ||
                               ps.stagnant_macro >= cfg.plateau_patience;
  if (decay) {
    opt.lr_encoder *= cfg.plateau_factor;
    opt.lr_head *= cfg.plateau_factor;
    ps = PlateauState{};
    ps.best_micro = dev_micro;
    ps.best_macro = dev_macro;
  }
  return decay;
}

struct EvalResult {
  ConfusionCounts counts;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  ConsistencyReport consistency;
  std::vector<std::vector<LabelId>> predictions;
};

/// Evaluation-mode pass over a dataset: forward, threshold, count. Gold
/// labels are consumed only by the metric accumulators.
inline EvalResult evaluate(const ModelParams& params, const Dataset& dataset, const Taxonomy& tax,
                           const PredictConfig& predict_cfg) {
  EvalResult result{ConfusionCounts(tax.num_labels())};
  result.predictions.reserve(dataset.size());
  Rng unused(0);
  for (const Document& doc : dataset) {
    const ForwardTrace trace =
        doc.has_feature() ? encode_precomputed(params, doc.feature, 0.0, unused, false)
                          : encode(params, doc.token_ids, 0.0, unused, false);
    result.predictions.push_back(predict(trace, predict_cfg));
    result.counts.add(doc.labels, result.predictions.back());
  }
  result.micro_f1 = micro_f1(result.counts);
  result.macro_f1 = macro_f1(result.counts);
  result.consistency = consistency_audit(result.predictions, tax);
  return result;
}

struct EpochLog {
  int epoch = 0;
  double bce = 0.0;
  double hilcl = 0.0;
  double rec_reg = 0.0;
  double total = 0.0;
  double dev_micro_f1 = 0.0;
  double dev_macro_f1 = 0.0;
  double dev_violation_rate = 0.0;
  double lr_encoder = 0.0;
  double lr_head = 0.0;

  nlohmann::json to_json() const {
    return {{"epoch", epoch},
            {"loss",
             {{"bce", bce}, {"hilcl", hilcl}, {"rec_reg", rec_reg}, {"total", total}}},
            {"dev",
             {{"micro_f1", dev_micro_f1},
              {"macro_f1", dev_macro_f1},
              {"violation_rate", dev_violation_rate}}},
            {"lr", {{"encoder", lr_encoder}, {"head", lr_head}}}};
  }
};

struct TrainResult {
  ModelParams best_params;   // snapshot with the best dev Macro-F1
  int best_epoch = -1;
  double best_dev_macro = -1.0;
  ModelParams final_params;  // parameters after the last epoch
  std::vector<EpochLog> log;
};

/// The deterministic epoch loop: seeded shuffle, per-batch mean gradients,
/// Adam, dev evaluation, plateau decay, best-Macro-F1 snapshotting. The
/// 0-based loop epoch is the curriculum epoch.
inline TrainResult train(const Dataset& train_set, const Dataset& dev_set, const Taxonomy& tax,
                         int vocab_size, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) fail(ErrorCode::EmptyDataset, "training split is empty");
  if (dev_set.empty()) fail(ErrorCode::EmptyDataset, "dev split is empty");

  const ModelDims dims{std::max(vocab_size, 2), cfg.d_e, cfg.d_h, tax.num_labels()};
  Rng rng_init(mix64(cfg.seed, 1));
  Rng rng_shuffle(mix64(cfg.seed, 2));
  Rng rng_dropout(mix64(cfg.seed, 3));

  ModelParams params = ModelParams::init(dims, rng_init);
  OptimizerState opt = OptimizerState::init(dims, cfg);
  PlateauState plateau;

  NegativeMode neg = cfg.negatives;
  if (neg.kind == NegativeSampling::random_k && neg.seed == 0) neg.seed = cfg.seed;
  const NegativeIndex index = NegativeIndex::build(tax, neg);

  TrainResult result;
  result.log.reserve(static_cast<std::size_t>(cfg.epochs));

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const double n_docs = static_cast<double>(train_set.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng_shuffle.shuffle(order);

    double sum_bce = 0.0, sum_hilcl = 0.0, sum_rec = 0.0, sum_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(stop - start);

      // The regularizer depends on the head weights alone, so one
      // evaluation covers the whole batch.
      RecRegResult rec;
      if (cfg.loss.rec_reg_weight > 0.0) rec = recursive_regularization(params.head_weight, tax);

      ModelParams batch_grads = ModelParams::zeros(dims);
      for (std::size_t b = start; b < stop; ++b) {
        const Document& doc = train_set[order[b]];
        const ForwardTrace trace =
            doc.has_feature()
                ? encode_precomputed(params, doc.feature, cfg.dropout_rate, rng_dropout, true)
                : encode(params, doc.token_ids, cfg.dropout_rate, rng_dropout, true);

        const BceResult bce = bce_loss(trace.logits, doc.labels, cfg.loss.bce_mode);
        const HilclResult hilcl = hilcl_loss(trace.logits, doc.labels, epoch, cfg.schedule, index,
                                             tax, cfg.loss.lcl_space, cfg.loss.hilcl_mean);

        std::vector<double> grad_logits = bce.grad_logits;
        for (std::size_t i = 0; i < grad_logits.size(); ++i)
          grad_logits[i] += cfg.loss.lambda * hilcl.grad_logits[i];

        const ModelParams doc_grads = backward(trace, grad_logits, params);
        batch_grads.add_scaled(doc_grads, 1.0);

        sum_bce += bce.loss;
        sum_hilcl += hilcl.loss;
        sum_rec += rec.loss;
        sum_total += bce.loss + cfg.loss.lambda * hilcl.loss + cfg.loss.rec_reg_weight * rec.loss;
      }

      batch_grads.scale(inv_batch);
      if (cfg.loss.rec_reg_weight > 0.0) {
        for (std::size_t k = 0; k < batch_grads.head_weight.data.size(); ++k)
          batch_grads.head_weight.data[k] += cfg.loss.rec_reg_weight * rec.grad.data[k];
      }
      adam_step(params, batch_grads, opt, cfg);
    }

    const EvalResult dev = evaluate(params, dev_set, tax, cfg.predict);
    plateau_scheduler(dev.micro_f1, dev.macro_f1, plateau, opt, cfg);

    EpochLog entry;
    entry.epoch = epoch;
    entry.bce = sum_bce / n_docs;
    entry.hilcl = sum_hilcl / n_docs;
    entry.rec_reg = sum_rec / n_docs;
    entry.total = sum_total / n_docs;
    entry.dev_micro_f1 = dev.micro_f1;
    entry.dev_macro_f1 = dev.macro_f1;
    entry.dev_violation_rate = dev.consistency.violation_rate;
    entry.lr_encoder = opt.lr_encoder;
    entry.lr_head = opt.lr_head;
    result.log.push_back(entry);

    if (dev.macro_f1 > result.best_dev_macro) {
      result.best_dev_macro = dev.macro_f1;
      result.best_epoch = epoch;
      result.best_params = params;
    }
  }

  result.final_params = std::move(params);
  return result;
}

}  // namespace hilight
