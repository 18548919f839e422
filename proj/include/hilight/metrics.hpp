#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "hilight/bitmask.hpp"
#include "hilight/common.hpp"
#include "hilight/matrix.hpp"
#include "hilight/taxonomy.hpp"

namespace hilight {

/// Per-label tp/fp/fn over a dataset.
struct ConfusionCounts {
  std::vector<long long> tp, fp, fn;

  explicit ConfusionCounts(int num_labels)
      : tp(static_cast<std::size_t>(num_labels), 0),
        fp(static_cast<std::size_t>(num_labels), 0),
        fn(static_cast<std::size_t>(num_labels), 0) {}

  int num_labels() const { return static_cast<int>(tp.size()); }

  void add(const LabelSet& gold, const std::vector<LabelId>& predicted) {
    Bitmask pred = Bitmask::of(tp.size(), predicted);
    for (LabelId i : gold.ids) {
      if (pred.test(static_cast<std::size_t>(i)))
        ++tp[static_cast<std::size_t>(i)];
      else
        ++fn[static_cast<std::size_t>(i)];
    }
    pred.for_each([&](std::size_t i) {
      if (!gold.contains(static_cast<LabelId>(i))) ++fp[i];
    });
  }
};

/// F1 with the 0/0 -> 0 convention.
inline double f1_from(long long tp, long long fp, long long fn) {
  const long long denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

inline double micro_f1(const ConfusionCounts& counts) {
  long long tp = 0, fp = 0, fn = 0;
  for (int i = 0; i < counts.num_labels(); ++i) {
    tp += counts.tp[i];
    fp += counts.fp[i];
    fn += counts.fn[i];
  }
  return f1_from(tp, fp, fn);
}

inline std::vector<double> labelwise_f1(const ConfusionCounts& counts) {
  std::vector<double> out(counts.tp.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f1_from(counts.tp[i], counts.fp[i], counts.fn[i]);
  return out;
}

inline double macro_f1(const ConfusionCounts& counts) {
  if (counts.num_labels() == 0) return 0.0;
  const std::vector<double> per_label = labelwise_f1(counts);
  double sum = 0.0;
  for (double f : per_label) sum += f;
  return sum / static_cast<double>(per_label.size());
}

/// Both directions of the parent-iff-some-child-positive consistency rule,
/// reported separately since threshold classifiers violate them
/// asymmetrically.
struct ConsistencyReport {
  long long parent_without_child = 0;
  long long child_without_parent = 0;
  long long audited = 0;  // documents x internal labels
  double violation_rate = 0.0;
};

inline ConsistencyReport consistency_audit(const std::vector<std::vector<LabelId>>& predictions,
                                           const Taxonomy& tax) {
  const int c = tax.num_labels();
  std::vector<LabelId> internal;
  for (LabelId i = 0; i < c; ++i)
    if (!tax.is_leaf(i)) internal.push_back(i);

  ConsistencyReport report;
  report.audited = static_cast<long long>(predictions.size()) * static_cast<long long>(internal.size());
  for (const std::vector<LabelId>& doc : predictions) {
    Bitmask pred = Bitmask::of(static_cast<std::size_t>(c), doc);
    for (LabelId i : internal) {
      if (!pred.test(static_cast<std::size_t>(i))) continue;
      bool child_on = false;
      for (LabelId ch : tax.children(i))
        if (pred.test(static_cast<std::size_t>(ch))) {
          child_on = true;
          break;
        }
      if (!child_on) ++report.parent_without_child;
    }
    for (LabelId i : doc) {
      const auto p = tax.parent(i);
      if (p && !pred.test(static_cast<std::size_t>(*p))) ++report.child_without_parent;
    }
  }
  if (report.audited > 0)
    report.violation_rate = static_cast<double>(report.parent_without_child +
                                                report.child_without_parent) /
                            static_cast<double>(report.audited);
  return report;
}

struct EdgeDistance {
  LabelId parent_id = -1;
  LabelId child_id = -1;
  double distance = 0.0;
};

struct EdgeDistanceSummary {
  std::vector<EdgeDistance> edges;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Euclidean distance between classifier rows across each non-root tree
/// edge; the collapse instrumentation.
inline EdgeDistanceSummary classifier_pairwise_distance(const Matrix& head_weight,
                                                        const Taxonomy& tax) {
  if (head_weight.rows != tax.num_labels())
    fail(ErrorCode::ShapeMismatch, "head_weight rows != taxonomy size");
  EdgeDistanceSummary summary;
  for (LabelId child = 0; child < tax.num_labels(); ++child) {
    const auto p = tax.parent(child);
    if (!p) continue;
    const double* wp = head_weight.row(*p);
    const double* wc = head_weight.row(child);
    double sq = 0.0;
    for (int j = 0; j < head_weight.cols; ++j) {
      const double diff = wp[j] - wc[j];
      sq += diff * diff;
    }
    summary.edges.push_back({*p, child, std::sqrt(sq)});
  }
  if (!summary.edges.empty()) {
    double sum = 0.0;
    summary.min = summary.edges.front().distance;
    summary.max = summary.edges.front().distance;
    for (const EdgeDistance& e : summary.edges) {
      sum += e.distance;
      summary.min = std::min(summary.min, e.distance);
      summary.max = std::max(summary.max, e.distance);
    }
    summary.mean = sum / static_cast<double>(summary.edges.size());
  }
  return summary;
}

}  // namespace hilight
