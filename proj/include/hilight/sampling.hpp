#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hilight/bitmask.hpp"
#include "hilight/common.hpp"
#include "hilight/rng.hpp"
#include "hilight/taxonomy.hpp"

namespace hilight {

enum class ScheduleMode { fine_to_coarse, coarse_to_fine, all_at_once };
enum class DrevMode { height, min_leaf_dist };

/// Curriculum schedule: reverse-depth buckets are unlocked one level every
/// k epochs, fine to coarse by default.
struct ScheduleConfig {
  int k = 2;
  ScheduleMode mode = ScheduleMode::fine_to_coarse;
  DrevMode drev = DrevMode::height;

  void validate() const {
    if (k < 1) fail(ErrorCode::InvalidConfig, "schedule k must be >= 1");
  }
};

enum class NegativeSampling { local_hard, random_k, siblings_only, subtree_only };

struct NegativeMode {
  NegativeSampling kind = NegativeSampling::local_hard;
  int sample_size = 0;     // random_k only; 0 = mean local-hard candidate count
  std::uint64_t seed = 0;  // random_k only
};

/// Per-label candidate masks, independent of any document; document
/// positives are subtracted at query time.
class NegativeIndex {
 public:
  static NegativeIndex build(const Taxonomy& tax, const NegativeMode& mode) {
    const int c = tax.num_labels();
    NegativeIndex index;
    index.kind_ = mode.kind;
    index.seed_ = mode.seed;
    index.candidates_.reserve(c);

    std::size_t local_hard_total = 0;
    for (LabelId i = 0; i < c; ++i) {
      Bitmask sib = Bitmask::of(c, tax.sibling_set(i));
      Bitmask sub = Bitmask::of(c, tax.subtree_set(i));
      local_hard_total += (sib | sub).count();
      switch (mode.kind) {
        case NegativeSampling::local_hard:
          index.candidates_.push_back(sib | sub);
          break;
        case NegativeSampling::siblings_only:
          index.candidates_.push_back(std::move(sib));
          break;
        case NegativeSampling::subtree_only:
          index.candidates_.push_back(std::move(sub));
          break;
        case NegativeSampling::random_k: {
          Bitmask all(c);
          for (LabelId j = 0; j < c; ++j)
            if (j != i) all.set(j);
          index.candidates_.push_back(std::move(all));
          break;
        }
      }
    }

    if (mode.kind == NegativeSampling::random_k) {
      if (mode.sample_size < 0) fail(ErrorCode::InvalidConfig, "random_k sample size must be >= 1");
      // Default matches the mean local-hard candidate count, so the
      // ablation compares at matched negative budgets.
      index.sample_size_ = mode.sample_size > 0
                               ? mode.sample_size
                               : std::max<int>(1, static_cast<int>((local_hard_total + c - 1) / c));
    }
    return index;
  }

  int num_labels() const { return static_cast<int>(candidates_.size()); }
  NegativeSampling kind() const { return kind_; }
  int sample_size() const { return sample_size_; }
  std::uint64_t seed() const { return seed_; }

  const Bitmask& candidates(LabelId i) const { return candidates_.at(static_cast<std::size_t>(i)); }

  /// Hard negatives of positive label i for a document with the given
  /// positive set. `salt` differentiates random_k draws across calls
  /// (e.g. per document) while staying reproducible.
  Bitmask hard_negatives(LabelId i, const LabelSet& positives, std::uint64_t salt = 0) const {
    if (!positives.contains(i))
      fail(ErrorCode::NotAPositive, "label id " + std::to_string(i) + " is not a positive");
    const int c = num_labels();
    if (kind_ == NegativeSampling::random_k) {
      std::vector<LabelId> pool;
      pool.reserve(c - positives.size());
      for (LabelId j = 0; j < c; ++j)
        if (!positives.contains(j)) pool.push_back(j);
      const std::size_t take = std::min<std::size_t>(pool.size(), static_cast<std::size_t>(sample_size_));
      Rng rng(mix64(mix64(seed_, static_cast<std::uint64_t>(i)), salt));
      Bitmask mask(c);
      for (std::size_t t = 0; t < take; ++t) {
        const std::size_t j = t + rng.below(pool.size() - t);
        std::swap(pool[t], pool[j]);
        mask.set(static_cast<std::size_t>(pool[t]));
      }
      return mask;
    }
    Bitmask mask = candidates(i);
    for (LabelId p : positives.ids) mask.reset(static_cast<std::size_t>(p));
    return mask;
  }

 private:
  NegativeSampling kind_ = NegativeSampling::local_hard;
  int sample_size_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<Bitmask> candidates_;
};

inline NegativeIndex build_negative_index(const Taxonomy& tax, const NegativeMode& mode) {
  return NegativeIndex::build(tax, mode);
}

/// The curriculum target subset for one document at a given 0-based epoch.
/// fine_to_coarse unlocks reverse-depth (height) levels from the leaves up;
/// coarse_to_fine mirrors the same buckets starting from the top level.
inline LabelSet hilearn_targets(const Taxonomy& tax, const LabelSet& positives, int epoch,
                                const ScheduleConfig& cfg) {
  cfg.validate();
  if (epoch < 0) fail(ErrorCode::InvalidConfig, "epoch must be >= 0");
  if (cfg.mode == ScheduleMode::all_at_once) return positives;

  const int unlocked = epoch / cfg.k;
  const bool use_height = cfg.drev == DrevMode::height;
  const int top = use_height ? tax.max_height() : tax.max_min_leaf_dist();

  LabelSet out;
  out.ids.reserve(positives.size());
  for (LabelId i : positives.ids) {
    const int rev_depth = use_height ? tax.height(i) : tax.min_leaf_dist(i);
    const int rank = cfg.mode == ScheduleMode::fine_to_coarse ? rev_depth : top - rev_depth;
    if (rank <= unlocked) out.ids.push_back(i);
  }
  return out;
}

}  // namespace hilight
