#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "hilight/common.hpp"

namespace hilight {

/// A document's positive labels: sorted, duplicate-free, closed under
/// parents. The root is implicitly positive and never stored.
struct LabelSet {
  std::vector<LabelId> ids;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  bool contains(LabelId i) const { return std::binary_search(ids.begin(), ids.end(), i); }
  bool operator==(const LabelSet&) const = default;
};

/// Immutable rooted label tree. Ids cover non-root labels only, assigned in
/// first-appearance order of the source file, so runs are reproducible.
/// All queries are read-only and safe for concurrent use.
class Taxonomy {
 public:
  /// Parses the tab-separated hierarchy format: one `parent<TAB>child...`
  /// per line, the first line's parent being the root. Repeated parent
  /// lines append children.
  static Taxonomy parse(const std::vector<std::string>& lines) {
    std::vector<std::string> names;
    std::unordered_map<std::string, int> name_index;
    std::vector<int> node_parent;  // -1 = none assigned

    auto intern = [&](const std::string& s) {
      auto it = name_index.find(s);
      if (it != name_index.end()) return it->second;
      const int idx = static_cast<int>(names.size());
      names.push_back(s);
      node_parent.push_back(-1);
      name_index.emplace(s, idx);
      return idx;
    };

    bool saw_content = false;
    for (const std::string& raw : lines) {
      std::vector<std::string> tokens = split_fields(raw);
      if (tokens.empty()) continue;
      saw_content = true;
      const int parent = intern(tokens[0]);
      for (std::size_t t = 1; t < tokens.size(); ++t) {
        const int child = intern(tokens[t]);
        if (child == 0)
          fail(ErrorCode::CycleDetected, "root '" + tokens[t] + "' listed as a child");
        if (node_parent[child] != -1)
          fail(ErrorCode::MultipleParents, "label '" + tokens[t] + "' assigned a second parent");
        node_parent[child] = parent;
      }
    }
    if (!saw_content) fail(ErrorCode::EmptyTaxonomy, "no taxonomy lines");
    const int num_nodes = static_cast<int>(names.size());
    if (num_nodes <= 1) fail(ErrorCode::EmptyTaxonomy, "taxonomy has no labels besides the root");

    // Walk parent chains once to classify every node and compute depths.
    std::vector<int> node_depth(num_nodes, -1);
    std::vector<int> state(num_nodes, 0);  // 0 fresh, 1 on current walk, 2 settled
    node_depth[0] = 0;
    state[0] = 2;
    std::vector<int> chain;
    for (int v = 0; v < num_nodes; ++v) {
      if (state[v] == 2) continue;
      chain.clear();
      int cur = v;
      while (true) {
        if (state[cur] == 1) fail(ErrorCode::CycleDetected, "cycle through label '" + names[cur] + "'");
        if (state[cur] == 2) break;
        if (node_parent[cur] == -1)
          fail(ErrorCode::DisconnectedNode, "label '" + names[cur] + "' is not reachable from the root");
        state[cur] = 1;
        chain.push_back(cur);
        cur = node_parent[cur];
      }
      int d = node_depth[cur];
      for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
        node_depth[*it] = ++d;
        state[*it] = 2;
      }
    }

    Taxonomy tax;
    tax.root_name_ = names[0];
    tax.num_labels_ = num_nodes - 1;
    tax.parent_.resize(tax.num_labels_);
    tax.depth_.resize(tax.num_labels_);
    tax.id_to_name_.resize(tax.num_labels_);
    for (int node = 1; node < num_nodes; ++node) {
      const LabelId id = node - 1;  // first-appearance order, root skipped
      tax.parent_[id] = node_parent[node] == 0 ? -1 : node_parent[node] - 1;
      tax.depth_[id] = node_depth[node];
      tax.id_to_name_[id] = names[node];
      tax.name_to_id_.emplace(names[node], id);
    }
    tax.build_indexes();
    return tax;
  }

  int num_labels() const { return num_labels_; }
  const std::string& root_name() const { return root_name_; }

  std::optional<LabelId> parent(LabelId i) const {
    const int p = parent_[checked(i)];
    return p < 0 ? std::nullopt : std::optional<LabelId>(p);
  }

  const std::vector<LabelId>& children(LabelId i) const { return children_[checked(i)]; }
  const std::vector<LabelId>& root_children() const { return root_children_; }
  bool is_leaf(LabelId i) const { return children_[checked(i)].empty(); }

  int depth(LabelId i) const { return depth_[checked(i)]; }
  int height(LabelId i) const { return height_[checked(i)]; }
  int min_leaf_dist(LabelId i) const { return min_leaf_dist_[checked(i)]; }

  int max_depth() const { return max_depth_; }
  int max_height() const { return max_height_; }
  int max_min_leaf_dist() const { return max_min_leaf_dist_; }

  const std::string& name(LabelId i) const { return id_to_name_[checked(i)]; }

  std::optional<LabelId> id_of(const std::string& name) const {
    auto it = name_to_id_.find(name);
    if (it == name_to_id_.end()) return std::nullopt;
    return it->second;
  }

  /// Labels sharing i's parent, i excluded; children of the root are
  /// siblings of each other. Ascending id order.
  std::vector<LabelId> sibling_set(LabelId i) const {
    const auto p = parent(i);
    const std::vector<LabelId>& group = p ? children_[*p] : root_children_;
    std::vector<LabelId> out;
    out.reserve(group.size() > 0 ? group.size() - 1 : 0);
    for (LabelId j : group)
      if (j != i) out.push_back(j);
    return out;
  }

  /// Strict descendants of i, ascending id order.
  std::vector<LabelId> subtree_set(LabelId i) const {
    checked(i);
    std::vector<LabelId> out;
    std::vector<LabelId> stack(children_[i].begin(), children_[i].end());
    while (!stack.empty()) {
      const LabelId v = stack.back();
      stack.pop_back();
      out.push_back(v);
      stack.insert(stack.end(), children_[v].begin(), children_[v].end());
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Validates parent-closure and returns the normalized set.
  LabelSet validate_labelset(std::vector<LabelId> ids) const {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    LabelSet set{std::move(ids)};
    for (LabelId i : set.ids) {
      checked(i);
      const auto p = parent(i);
      if (p && !set.contains(*p))
        fail(ErrorCode::OrphanLabel,
             "label '" + name(i) + "' present without its parent '" + name(*p) + "'");
    }
    return set;
  }

  nlohmann::json to_json() const {
    nlohmann::json labels = nlohmann::json::array();
    for (LabelId i = 0; i < num_labels_; ++i)
      labels.push_back({{"name", id_to_name_[i]}, {"parent", parent_[i]}});
    return {{"format_version", 1}, {"root", root_name_}, {"labels", labels}};
  }

  static Taxonomy from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format_version", 0) != 1)
      fail(ErrorCode::MalformedLine, "unsupported taxonomy dump");
    Taxonomy tax;
    tax.root_name_ = j.at("root").get<std::string>();
    const auto& labels = j.at("labels");
    tax.num_labels_ = static_cast<int>(labels.size());
    if (tax.num_labels_ == 0) fail(ErrorCode::EmptyTaxonomy, "dump has no labels");
    tax.parent_.resize(tax.num_labels_);
    tax.id_to_name_.resize(tax.num_labels_);
    tax.depth_.assign(tax.num_labels_, 0);
    for (LabelId i = 0; i < tax.num_labels_; ++i) {
      tax.id_to_name_[i] = labels[i].at("name").get<std::string>();
      tax.parent_[i] = labels[i].at("parent").get<int>();
      tax.name_to_id_.emplace(tax.id_to_name_[i], i);
    }
    for (LabelId i = 0; i < tax.num_labels_; ++i) {
      int d = 1, cur = tax.parent_[i], steps = 0;
      while (cur >= 0) {
        ++d;
        cur = tax.parent_[cur];
        if (++steps > tax.num_labels_) fail(ErrorCode::CycleDetected, "cycle in taxonomy dump");
      }
      tax.depth_[i] = d;
    }
    tax.build_indexes();
    return tax;
  }

  /// Emits the tab-separated format such that re-parsing reproduces the
  /// identical id assignment (consecutive same-parent id runs share a line).
  std::vector<std::string> to_taxonomy_lines() const {
    std::vector<std::string> lines;
    LabelId i = 0;
    while (i < num_labels_) {
      const int p = parent_[i];
      std::string line = p < 0 ? root_name_ : id_to_name_[p];
      LabelId j = i;
      while (j < num_labels_ && parent_[j] == p) {
        line += '\t';
        line += id_to_name_[j];
        ++j;
      }
      lines.push_back(std::move(line));
      i = j;
    }
    return lines;
  }

  bool operator==(const Taxonomy& other) const {
    return num_labels_ == other.num_labels_ && root_name_ == other.root_name_ &&
           parent_ == other.parent_ && id_to_name_ == other.id_to_name_;
  }

 private:
  LabelId checked(LabelId i) const {
    if (i < 0 || i >= num_labels_) throw std::out_of_range("label id out of range");
    return i;
  }

  static std::vector<std::string> split_fields(const std::string& raw) {
    std::vector<std::string> tokens;
    std::string field;
    auto flush = [&]() {
      while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
      std::size_t b = 0;
      while (b < field.size() && field[b] == ' ') ++b;
      if (b < field.size()) tokens.push_back(field.substr(b));
      field.clear();
    };
    for (char c : raw) {
      if (c == '\t')
        flush();
      else
        field += c;
    }
    flush();
    return tokens;
  }

  void build_indexes() {
    children_.assign(num_labels_, {});
    root_children_.clear();
    for (LabelId i = 0; i < num_labels_; ++i) {
      if (parent_[i] < 0)
        root_children_.push_back(i);
      else
        children_[parent_[i]].push_back(i);
    }

    std::vector<LabelId> order(num_labels_);
    for (LabelId i = 0; i < num_labels_; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](LabelId a, LabelId b) { return depth_[a] > depth_[b]; });
    height_.assign(num_labels_, 0);
    min_leaf_dist_.assign(num_labels_, 0);
    for (LabelId i : order) {
      if (children_[i].empty()) continue;
      int hi = 0, lo = num_labels_;
      for (LabelId c : children_[i]) {
        hi = std::max(hi, height_[c]);
        lo = std::min(lo, min_leaf_dist_[c]);
      }
      height_[i] = 1 + hi;
      min_leaf_dist_[i] = 1 + lo;
    }

    max_depth_ = 0;
    max_height_ = 0;
    max_min_leaf_dist_ = 0;
    for (LabelId i = 0; i < num_labels_; ++i) {
      max_depth_ = std::max(max_depth_, depth_[i]);
      max_height_ = std::max(max_height_, height_[i]);
      max_min_leaf_dist_ = std::max(max_min_leaf_dist_, min_leaf_dist_[i]);
    }
  }

  int num_labels_ = 0;
  std::string root_name_;
  std::vector<int> parent_;  // -1 = child of root
  std::vector<std::vector<LabelId>> children_;
  std::vector<LabelId> root_children_;
  std::vector<int> depth_;
  std::vector<int> height_;
  std::vector<int> min_leaf_dist_;
  std::unordered_map<std::string, LabelId> name_to_id_;
  std::vector<std::string> id_to_name_;
  int max_depth_ = 0;
  int max_height_ = 0;
  int max_min_leaf_dist_ = 0;
};

inline Taxonomy parse_taxonomy(const std::vector<std::string>& lines) {
  return Taxonomy::parse(lines);
}

}  // namespace hilight
