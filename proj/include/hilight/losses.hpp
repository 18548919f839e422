#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "hilight/common.hpp"
#include "hilight/matrix.hpp"
#include "hilight/numeric.hpp"
#include "hilight/sampling.hpp"
#include "hilight/taxonomy.hpp"

namespace hilight {

enum class BceMode { standard, literal_positive_only };
enum class LclSpace { logit, sigmoid };

struct LossConfig {
  double lambda = 1e-2;
  BceMode bce_mode = BceMode::standard;
  LclSpace lcl_space = LclSpace::logit;
  double rec_reg_weight = 0.0;  // 0 disables the baseline regularizer
  bool hilcl_mean = false;      // normalize the target sum by its size

  void validate() const {
    if (lambda < 0.0) fail(ErrorCode::InvalidConfig, "lambda must be >= 0");
    if (rec_reg_weight < 0.0) fail(ErrorCode::InvalidConfig, "rec_reg_weight must be >= 0");
  }
};

struct LclResult {
  double loss = 0.0;
  std::vector<std::pair<LabelId, double>> grad;  // sparse over the positive and its hard set
};

/// Softmax contrast of one positive label against its hard negatives,
/// everything else masked out. Logit space drops the sigmoid; sigmoid
/// space applies it inside the exponentials.
inline LclResult lcl_loss(const std::vector<double>& logits, LabelId i, const Bitmask& hard,
                          LclSpace space = LclSpace::logit) {
  if (static_cast<std::size_t>(i) >= logits.size())
    fail(ErrorCode::ShapeMismatch, "positive id outside logit vector");
  if (hard.size() != logits.size())
    fail(ErrorCode::ShapeMismatch, "hard mask size != logit vector size");
  if (hard.test(static_cast<std::size_t>(i)))
    fail(ErrorCode::PositiveInHardSet, "label id " + std::to_string(i) + " occurs in its own hard set");

  LclResult result;
  if (hard.none()) return result;  // no confusable negatives, no term

  std::vector<LabelId> members{i};
  hard.for_each([&](std::size_t j) { members.push_back(static_cast<LabelId>(j)); });

  std::vector<double> scores(members.size());
  for (std::size_t s = 0; s < members.size(); ++s) {
    const double z = logits[static_cast<std::size_t>(members[s])];
    scores[s] = space == LclSpace::logit ? z : stable_sigmoid(z);
  }

  // log1p form keeps tiny losses and near-saturated gradients alive when
  // the positive dominates its hard set.
  std::size_t arg_top = 0;
  for (std::size_t s = 1; s < scores.size(); ++s)
    if (scores[s] > scores[arg_top]) arg_top = s;
  const double top = scores[arg_top];
  double rest = 0.0;
  for (std::size_t s = 0; s < scores.size(); ++s)
    if (s != arg_top) rest += std::exp(scores[s] - top);
  const double denom = 1.0 + rest;
  result.loss = (top - scores[0]) + std::log1p(rest);

  result.grad.reserve(members.size());
  for (std::size_t s = 0; s < members.size(); ++s) {
    const double p = (s == arg_top ? 1.0 : std::exp(scores[s] - top)) / denom;
    double g;
    if (s != 0)
      g = p;
    else if (s == arg_top)
      g = -rest / denom;  // p - 1 without cancellation
    else
      g = p - 1.0;
    if (space == LclSpace::sigmoid) {
      const double u = scores[s];
      g *= u * (1.0 - u);
    }
    result.grad.emplace_back(members[s], g);
  }
  return result;
}

struct HilclResult {
  double loss = 0.0;
  std::vector<double> grad_logits;
  std::vector<LabelId> targets;  // the curriculum subset actually used
};

/// Sum of LCL terms over the curriculum-selected positives; gradients from
/// overlapping hard sets accumulate additively.
inline HilclResult hilcl_loss(const std::vector<double>& logits, const LabelSet& positives,
                              int epoch, const ScheduleConfig& sched, const NegativeIndex& index,
                              const Taxonomy& tax, LclSpace space = LclSpace::logit,
                              bool mean_normalize = false, std::uint64_t salt = 0) {
  HilclResult result;
  result.grad_logits.assign(logits.size(), 0.0);
  const LabelSet selected = hilearn_targets(tax, positives, epoch, sched);
  result.targets = selected.ids;
  for (LabelId i : selected.ids) {
    const Bitmask hard = index.hard_negatives(i, positives, salt);
    LclResult term = lcl_loss(logits, i, hard, space);
    result.loss += term.loss;
    for (const auto& [j, g] : term.grad) result.grad_logits[static_cast<std::size_t>(j)] += g;
  }
  if (mean_normalize && !result.targets.empty()) {
    const double inv = 1.0 / static_cast<double>(result.targets.size());
    result.loss *= inv;
    for (double& g : result.grad_logits) g *= inv;
  }
  return result;
}

struct BceResult {
  double loss = 0.0;
  std::vector<double> grad_logits;
};

/// Standard mode averages the two-sided binary cross-entropy over all
/// labels; literal mode sums -log sigma(z) over the positives only and
/// averages by |y|. Both computed in log-sum-exp-stable form.
inline BceResult bce_loss(const std::vector<double>& logits, const LabelSet& positives,
                          BceMode mode = BceMode::standard) {
  const std::size_t c = logits.size();
  BceResult result;
  result.grad_logits.assign(c, 0.0);

  if (mode == BceMode::literal_positive_only) {
    if (positives.empty())
      fail(ErrorCode::EmptyPositives, "literal BCE undefined for an empty positive set");
    const double inv_m = 1.0 / static_cast<double>(positives.size());
    for (LabelId i : positives.ids) {
      const double z = logits[static_cast<std::size_t>(i)];
      result.loss += softplus(-z) * inv_m;
      result.grad_logits[static_cast<std::size_t>(i)] = (stable_sigmoid(z) - 1.0) * inv_m;
    }
    return result;
  }

  const double inv_c = 1.0 / static_cast<double>(c);
  for (std::size_t i = 0; i < c; ++i) {
    const double z = logits[i];
    const double t = positives.contains(static_cast<LabelId>(i)) ? 1.0 : 0.0;
    result.loss += (t > 0.5 ? softplus(-z) : softplus(z)) * inv_c;
    result.grad_logits[i] = (stable_sigmoid(z) - t) * inv_c;
  }
  return result;
}

struct RecRegResult {
  double loss = 0.0;
  Matrix grad;  // same shape as head_weight, unscaled
};

/// Half the squared distance between each parent and child classifier row,
/// summed over tree edges with both endpoints below the root.
inline RecRegResult recursive_regularization(const Matrix& head_weight, const Taxonomy& tax) {
  if (head_weight.rows != tax.num_labels())
    fail(ErrorCode::ShapeMismatch, "head_weight rows != taxonomy size");
  RecRegResult result;
  result.grad = Matrix(head_weight.rows, head_weight.cols);
  for (LabelId child = 0; child < tax.num_labels(); ++child) {
    const auto p = tax.parent(child);
    if (!p) continue;
    const double* wp = head_weight.row(*p);
    const double* wc = head_weight.row(child);
    double* gp = result.grad.row(*p);
    double* gc = result.grad.row(child);
    for (int j = 0; j < head_weight.cols; ++j) {
      const double diff = wp[j] - wc[j];
      result.loss += 0.5 * diff * diff;
      gp[j] += diff;
      gc[j] -= diff;
    }
  }
  return result;
}

struct LossBreakdown {
  double bce = 0.0;
  double hilcl = 0.0;
  double rec_reg = 0.0;
  double total = 0.0;
  std::vector<double> grad_logits;
  std::vector<LabelId> active_targets;
  Matrix grad_head_weight;  // rec-reg path, already scaled; empty when disabled
};

/// Composes BCE + lambda * HiLCL + rec_reg_weight * recursive
/// regularization; only the regularizer contributes a direct head-weight
/// gradient, everything else flows through the logits.
inline LossBreakdown total_loss(const std::vector<double>& logits, const LabelSet& positives,
                                int epoch, const LossConfig& cfg, const ScheduleConfig& sched,
                                const NegativeIndex& index, const Matrix& head_weight,
                                const Taxonomy& tax, std::uint64_t salt = 0) {
  cfg.validate();
  if (static_cast<int>(logits.size()) != tax.num_labels())
    fail(ErrorCode::ShapeMismatch, "logit vector size != taxonomy size");

  LossBreakdown out;
  BceResult bce = bce_loss(logits, positives, cfg.bce_mode);
  HilclResult hilcl =
      hilcl_loss(logits, positives, epoch, sched, index, tax, cfg.lcl_space, cfg.hilcl_mean, salt);

  out.bce = bce.loss;
  out.hilcl = hilcl.loss;
  out.active_targets = std::move(hilcl.targets);
  out.grad_logits = std::move(bce.grad_logits);
  for (std::size_t i = 0; i < out.grad_logits.size(); ++i)
    out.grad_logits[i] += cfg.lambda * hilcl.grad_logits[i];

  if (cfg.rec_reg_weight > 0.0) {
    RecRegResult rec = recursive_regularization(head_weight, tax);
    out.rec_reg = rec.loss;
    out.grad_head_weight = std::move(rec.grad);
    for (double& g : out.grad_head_weight.data) g *= cfg.rec_reg_weight;
  }

  out.total = out.bce + cfg.lambda * out.hilcl + cfg.rec_reg_weight * out.rec_reg;
  return out;
}

}  // namespace hilight
