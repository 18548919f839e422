#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "hilight/common.hpp"
#include "hilight/rng.hpp"
#include "hilight/taxonomy.hpp"

namespace hilight {

struct Document {
  std::string id;
  std::vector<int> token_ids;
  LabelSet labels;
  std::vector<double> feature;  // optional precomputed hidden vector

  bool has_feature() const { return !feature.empty(); }
  bool operator==(const Document&) const = default;
};

using Dataset = std::vector<Document>;

/// Token <-> id bijection with reserved padding and unknown slots.
class Vocabulary {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;

  Vocabulary() : tokens_{"<pad>", "<unk>"} { reindex(); }

  /// Rebuilds from an id-ordered token list (e.g. a checkpoint).
  static Vocabulary from_tokens(std::vector<std::string> tokens) {
    if (tokens.size() < 2) fail(ErrorCode::InvalidConfig, "vocabulary needs the two special slots");
    Vocabulary v;
    v.tokens_ = std::move(tokens);
    v.reindex();
    return v;
  }

  int size() const { return static_cast<int>(tokens_.size()); }

  int id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkId : it->second;
  }

  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Appends a token that must not exist yet; returns its id.
  int add(const std::string& token) {
    auto [it, inserted] = index_.emplace(token, size());
    if (!inserted) fail(ErrorCode::InvalidConfig, "duplicate vocabulary token '" + token + "'");
    tokens_.push_back(token);
    return it->second;
  }

 private:
  void reindex() {
    index_.clear();
    for (int i = 0; i < size(); ++i) {
      if (!index_.emplace(tokens_[i], i).second)
        fail(ErrorCode::InvalidConfig, "duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

namespace detail {

inline nlohmann::json parse_jsonl_line(const std::string& line, std::size_t line_no) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": invalid JSON");
  }
}

inline const nlohmann::json* find_field(const nlohmann::json& j, const char* primary,
                                        const char* alt) {
  if (auto it = j.find(primary); it != j.end()) return &*it;
  if (auto it = j.find(alt); it != j.end()) return &*it;
  return nullptr;
}

inline std::vector<std::string> string_array(const nlohmann::json& j, const char* what,
                                             std::size_t line_no) {
  if (!j.is_array())
    fail(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": field '" + what +
                                       "' is not an array");
  std::vector<std::string> out;
  out.reserve(j.size());
  for (const auto& item : j) {
    if (!item.is_string())
      fail(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": field '" + what +
                                         "' holds a non-string entry");
    out.push_back(item.get<std::string>());
  }
  return out;
}

template <class Fn>
void for_each_line(const std::string& path, Fn fn) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(line, line_no);
  }
}

}  // namespace detail

/// Loads a JSON-lines corpus ("token"/"label" fields, "doc_token"/
/// "doc_label" accepted). Unknown tokens map to the unknown id; label names
/// resolve through the taxonomy and must be parent-closed.
inline Dataset load_corpus(const std::string& path, const Taxonomy& tax, const Vocabulary& vocab) {
  Dataset dataset;
  detail::for_each_line(path, [&](const std::string& line, std::size_t line_no) {
    const nlohmann::json j = detail::parse_jsonl_line(line, line_no);
    if (!j.is_object())
      fail(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": not a JSON object");

    Document doc;
    doc.id = j.contains("id") && j.at("id").is_string() ? j.at("id").get<std::string>()
                                                        : std::to_string(line_no);

    const nlohmann::json* tokens = detail::find_field(j, "token", "doc_token");
    if (tokens) {
      for (const std::string& t : detail::string_array(*tokens, "token", line_no))
        doc.token_ids.push_back(vocab.id(t));
    }
    if (const nlohmann::json* feat = detail::find_field(j, "feature", "doc_feature")) {
      if (!feat->is_array())
        fail(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": field 'feature' is not an array");
      for (const auto& x : *feat) {
        if (!x.is_number())
          fail(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": field 'feature' holds a non-number");
        doc.feature.push_back(x.get<double>());
      }
    }
    if (doc.token_ids.empty() && !doc.has_feature())
      fail(ErrorCode::MalformedLine,
           "line " + std::to_string(line_no) + ": document has neither tokens nor a feature");

    const nlohmann::json* labels = detail::find_field(j, "label", "doc_label");
    if (!labels)
      fail(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": missing 'label' field");
    std::vector<LabelId> ids;
    for (const std::string& name : detail::string_array(*labels, "label", line_no)) {
      if (name == tax.root_name()) continue;  // implicitly positive
      const auto id = tax.id_of(name);
      if (!id)
        fail(ErrorCode::UnknownLabelName,
             "line " + std::to_string(line_no) + ": unknown label '" + name + "'");
      ids.push_back(*id);
    }
    try {
      doc.labels = tax.validate_labelset(std::move(ids));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::OrphanLabel) throw;
      fail(ErrorCode::OrphanLabel, "line " + std::to_string(line_no) + ": " + e.what());
    }
    dataset.push_back(std::move(doc));
  });
  return dataset;
}

/// Frequency-ranked vocabulary over the "token" arrays of the given files;
/// ties break lexicographically so builds are reproducible.
inline Vocabulary build_vocab(const std::vector<std::string>& files, int min_count = 1,
                              int max_size = 0) {
  std::map<std::string, long long> counts;
  for (const std::string& path : files) {
    detail::for_each_line(path, [&](const std::string& line, std::size_t line_no) {
      const nlohmann::json j = detail::parse_jsonl_line(line, line_no);
      const nlohmann::json* tokens = detail::find_field(j, "token", "doc_token");
      if (!tokens) return;
      for (const std::string& t : detail::string_array(*tokens, "token", line_no)) ++counts[t];
    });
  }

  std::vector<std::pair<std::string, long long>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary vocab;
  for (const auto& [token, count] : ranked) {
    if (count < min_count) break;
    if (max_size > 0 && vocab.size() - 2 >= max_size) break;
    vocab.add(token);
  }
  return vocab;
}

/// Synthetic corpus recipe: a balanced tree whose labels own disjoint
/// signature-token sets, documents drawn along root-to-leaf paths.
struct SynthSpec {
  std::vector<int> branching = {3, 3, 3};  // children per node at each level
  int docs_train = 2000;
  int docs_dev = 300;
  int docs_test = 500;
  int tokens_per_doc = 32;
  int signature_tokens_per_label = 3;
  double noise_rate = 0.15;
  double multipath_prob = 0.25;
  std::uint64_t seed = 2023;
  int max_vocab = 0;  // 0 = unbounded

  int depth() const { return static_cast<int>(branching.size()); }

  int num_labels() const {
    long long total = 0, level = 1;
    for (int b : branching) {
      level *= b;
      total += level;
    }
    return static_cast<int>(total);
  }

  void validate() const {
    if (branching.empty()) fail(ErrorCode::InvalidConfig, "branching must have depth >= 1");
    for (int b : branching)
      if (b < 1) fail(ErrorCode::InvalidConfig, "branching factors must be >= 1");
    if (docs_train < 1 || docs_dev < 1 || docs_test < 1)
      fail(ErrorCode::InvalidConfig, "split sizes must be >= 1");
    if (tokens_per_doc < 1) fail(ErrorCode::InvalidConfig, "tokens_per_doc must be >= 1");
    if (signature_tokens_per_label < 1)
      fail(ErrorCode::InvalidConfig, "signature_tokens_per_label must be >= 1");
    if (noise_rate < 0.0 || noise_rate > 1.0)
      fail(ErrorCode::InvalidConfig, "noise_rate must lie in [0, 1]");
    if (multipath_prob < 0.0 || multipath_prob > 1.0)
      fail(ErrorCode::InvalidConfig, "multipath_prob must lie in [0, 1]");
    if (max_vocab > 0 &&
        static_cast<long long>(num_labels()) * signature_tokens_per_label > max_vocab)
      fail(ErrorCode::InfeasibleSpec, "signature tokens exceed the vocab budget");
  }

  nlohmann::json to_json() const {
    return {{"branching", branching},
            {"docs_train", docs_train},
            {"docs_dev", docs_dev},
            {"docs_test", docs_test},
            {"tokens_per_doc", tokens_per_doc},
            {"signature_tokens_per_label", signature_tokens_per_label},
            {"noise_rate", noise_rate},
            {"multipath_prob", multipath_prob},
            {"seed", seed},
            {"max_vocab", max_vocab}};
  }

  static SynthSpec from_json(const nlohmann::json& j) {
    SynthSpec spec;
    spec.branching = j.value("branching", spec.branching);
    spec.docs_train = j.value("docs_train", spec.docs_train);
    spec.docs_dev = j.value("docs_dev", spec.docs_dev);
    spec.docs_test = j.value("docs_test", spec.docs_test);
    spec.tokens_per_doc = j.value("tokens_per_doc", spec.tokens_per_doc);
    spec.signature_tokens_per_label =
        j.value("signature_tokens_per_label", spec.signature_tokens_per_label);
    spec.noise_rate = j.value("noise_rate", spec.noise_rate);
    spec.multipath_prob = j.value("multipath_prob", spec.multipath_prob);
    spec.seed = j.value("seed", spec.seed);
    spec.max_vocab = j.value("max_vocab", spec.max_vocab);
    return spec;
  }
};

struct SynthResult {
  Taxonomy taxonomy;
  Vocabulary vocab;
  Dataset train, dev, test;
};

/// Fully seed-deterministic generation; every document's label set is
/// parent-closed by construction.
inline SynthResult generate_synthetic(const SynthSpec& spec) {
  spec.validate();

  // Taxonomy: path-encoded names, breadth-first per level.
  std::vector<std::string> lines;
  std::vector<std::string> level_names{""};  // "" stands for the root
  for (int level = 0; level < spec.depth(); ++level) {
    std::vector<std::string> next;
    for (const std::string& parent : level_names) {
      std::string line = parent.empty() ? std::string("Root") : parent;
      for (int b = 0; b < spec.branching[level]; ++b) {
        std::string child = parent.empty() ? "n" + std::to_string(b)
                                           : parent + "_" + std::to_string(b);
        line += '\t';
        line += child;
        next.push_back(std::move(child));
      }
      lines.push_back(std::move(line));
    }
    level_names = std::move(next);
  }

  SynthResult result;
  result.taxonomy = Taxonomy::parse(lines);
  const Taxonomy& tax = result.taxonomy;
  const int c = tax.num_labels();

  const int sig = spec.signature_tokens_per_label;
  for (LabelId i = 0; i < c; ++i)
    for (int s = 0; s < sig; ++s) result.vocab.add("t" + std::to_string(i) + "_" + std::to_string(s));
  const int first_sig_id = 2;  // after <pad>/<unk>
  const int sig_vocab = c * sig;

  // Noise substitutions are biased toward the emitting label's siblings
  // and descendants, so the planted confusions sit where the hierarchy is
  // locally ambiguous rather than being spread uniformly.
  std::vector<std::vector<LabelId>> siblings(static_cast<std::size_t>(c));
  std::vector<std::vector<LabelId>> descendants(static_cast<std::size_t>(c));
  for (LabelId i = 0; i < c; ++i) {
    siblings[i] = tax.sibling_set(i);
    descendants[i] = tax.subtree_set(i);
  }

  std::vector<LabelId> leaves;
  for (LabelId i = 0; i < c; ++i)
    if (tax.is_leaf(i)) leaves.push_back(i);

  // Zipf-like path frequencies: later leaves are rarer, mirroring the
  // long-tailed label distributions of real corpora.
  std::vector<double> cumulative(leaves.size());
  double mass = 0.0;
  for (std::size_t r = 0; r < leaves.size(); ++r) {
    mass += 1.0 / static_cast<double>(1 + r);
    cumulative[r] = mass;
  }

  auto path_of = [&](LabelId leaf) {
    std::vector<LabelId> path;
    for (std::optional<LabelId> cur = leaf; cur; cur = tax.parent(*cur)) path.push_back(*cur);
    return path;
  };
  auto top_ancestor = [&](LabelId i) {
    while (tax.parent(i)) i = *tax.parent(i);
    return i;
  };

  // Extra paths stay inside the first path's top-level subtree when they
  // can, so multi-path documents blend branches of one coarse topic.
  std::vector<std::vector<std::size_t>> group_ranks(static_cast<std::size_t>(c));
  for (std::size_t r = 0; r < leaves.size(); ++r)
    group_ranks[static_cast<std::size_t>(top_ancestor(leaves[r]))].push_back(r);

  Rng rng(mix64(spec.seed, 0x5a17));
  auto draw_leaf = [&]() {
    const double u = rng.real01() * mass;
    const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u);
    return leaves[static_cast<std::size_t>(it - cumulative.begin())];
  };
  auto draw_cousin = [&](LabelId first) {
    const std::vector<std::size_t>& ranks = group_ranks[static_cast<std::size_t>(top_ancestor(first))];
    if (ranks.size() < 2) return draw_leaf();
    double group_mass = 0.0;
    for (std::size_t r : ranks) group_mass += 1.0 / static_cast<double>(1 + r);
    double u = rng.real01() * group_mass;
    for (std::size_t r : ranks) {
      u -= 1.0 / static_cast<double>(1 + r);
      if (u <= 0.0) return leaves[r];
    }
    return leaves[ranks.back()];
  };
  auto make_split = [&](const char* prefix, int count) {
    Dataset split;
    split.reserve(static_cast<std::size_t>(count));
    for (int n = 0; n < count; ++n) {
      const LabelId first = draw_leaf();
      std::vector<LabelId> ids = path_of(first);
      if (leaves.size() > 1 && rng.real01() < spec.multipath_prob) {
        // The extra path may stop above the leaves, like the partial
        // taxonomic tags of real corpora.
        auto extra = path_of(draw_cousin(first));
        const std::size_t drop = rng.index(extra.size());
        ids.insert(ids.end(), extra.begin() + static_cast<std::ptrdiff_t>(drop), extra.end());
      }
      Document doc;
      doc.id = std::string(prefix) + "-" + std::to_string(n + 1);
      doc.labels = tax.validate_labelset(std::move(ids));

      // Coarse topics dominate the surface text: a positive emits tokens
      // in proportion to 1 + its height.
      double label_mass = 0.0;
      for (LabelId i : doc.labels.ids) label_mass += 1.0 + tax.height(i);
      auto draw_positive = [&]() {
        double u = rng.real01() * label_mass;
        for (LabelId i : doc.labels.ids) {
          u -= 1.0 + tax.height(i);
          if (u <= 0.0) return i;
        }
        return doc.labels.ids.back();
      };

      doc.token_ids.reserve(static_cast<std::size_t>(spec.tokens_per_doc));
      for (int t = 0; t < spec.tokens_per_doc; ++t) {
        const LabelId label = draw_positive();
        int token = first_sig_id + label * sig + rng.index(static_cast<std::size_t>(sig));
        if (rng.real01() < spec.noise_rate) {
          const double u = rng.real01();
          const std::vector<LabelId>& sib = siblings[label];
          const std::vector<LabelId>& desc = descendants[label];
          if (u < 0.15 && !sib.empty()) {
            const LabelId other = sib[rng.index(sib.size())];
            token = first_sig_id + other * sig + rng.index(static_cast<std::size_t>(sig));
          } else if (u < 0.25 && !desc.empty()) {
            const LabelId other = desc[rng.index(desc.size())];
            token = first_sig_id + other * sig + rng.index(static_cast<std::size_t>(sig));
          } else {
            token = first_sig_id + rng.index(static_cast<std::size_t>(sig_vocab));
          }
        }
        doc.token_ids.push_back(token);
      }
      split.push_back(std::move(doc));
    }
    return split;
  };

  result.train = make_split("train", spec.docs_train);
  result.dev = make_split("dev", spec.docs_dev);
  result.test = make_split("test", spec.docs_test);
  return result;
}

/// Writes the JSON-lines corpus format load_corpus reads back; the "id"
/// field keeps split ids disjoint and round-trips exactly.
inline void write_corpus(std::ostream& out, const Dataset& dataset, const Taxonomy& tax,
                         const Vocabulary& vocab) {
  for (const Document& doc : dataset) {
    nlohmann::json tokens = nlohmann::json::array();
    for (int t : doc.token_ids) tokens.push_back(vocab.token(t));
    nlohmann::json labels = nlohmann::json::array();
    for (LabelId i : doc.labels.ids) labels.push_back(tax.name(i));
    nlohmann::json j{{"id", doc.id}, {"token", std::move(tokens)}, {"label", std::move(labels)}};
    if (doc.has_feature()) j["feature"] = doc.feature;
    out << j.dump() << '\n';
  }
}

inline void write_corpus_file(const std::string& path, const Dataset& dataset, const Taxonomy& tax,
                              const Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write '" + path + "'");
  write_corpus(out, dataset, tax, vocab);
}

inline void write_taxonomy_file(const std::string& path, const Taxonomy& tax) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write '" + path + "'");
  for (const std::string& line : tax.to_taxonomy_lines()) out << line << '\n';
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace hilight
