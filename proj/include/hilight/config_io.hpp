#pragma once

#include <string>

#include "json.hpp"

#include "hilight/common.hpp"
#include "hilight/losses.hpp"
#include "hilight/model.hpp"
#include "hilight/optim.hpp"
#include "hilight/sampling.hpp"

namespace hilight {

inline const char* to_string(ScheduleMode m) {
  switch (m) {
    case ScheduleMode::fine_to_coarse: return "fine_to_coarse";
    case ScheduleMode::coarse_to_fine: return "coarse_to_fine";
    case ScheduleMode::all_at_once: return "all_at_once";
  }
  return "?";
}

inline const char* to_string(DrevMode m) {
  return m == DrevMode::height ? "height" : "min_leaf_dist";
}

inline const char* to_string(NegativeSampling m) {
  switch (m) {
    case NegativeSampling::local_hard: return "local_hard";
    case NegativeSampling::random_k: return "random_k";
    case NegativeSampling::siblings_only: return "siblings_only";
    case NegativeSampling::subtree_only: return "subtree_only";
  }
  return "?";
}

inline const char* to_string(BceMode m) {
  return m == BceMode::standard ? "standard" : "literal_positive_only";
}

inline const char* to_string(LclSpace m) { return m == LclSpace::logit ? "logit" : "sigmoid"; }

inline const char* to_string(PlateauRule m) {
  return m == PlateauRule::neither ? "neither" : "either";
}

namespace detail {

template <class Enum>
Enum parse_enum(const std::string& text, std::initializer_list<Enum> values, const char* what) {
  for (Enum v : values)
    if (text == to_string(v)) return v;
  fail(ErrorCode::InvalidConfig, std::string("unknown ") + what + " '" + text + "'");
}

}  // namespace detail

inline ScheduleMode schedule_mode_from_string(const std::string& s) {
  return detail::parse_enum(
      s, {ScheduleMode::fine_to_coarse, ScheduleMode::coarse_to_fine, ScheduleMode::all_at_once},
      "schedule mode");
}

inline DrevMode drev_mode_from_string(const std::string& s) {
  return detail::parse_enum(s, {DrevMode::height, DrevMode::min_leaf_dist}, "reverse-depth mode");
}

inline NegativeSampling negative_sampling_from_string(const std::string& s) {
  return detail::parse_enum(s,
                            {NegativeSampling::local_hard, NegativeSampling::random_k,
                             NegativeSampling::siblings_only, NegativeSampling::subtree_only},
                            "negative sampling mode");
}

inline BceMode bce_mode_from_string(const std::string& s) {
  return detail::parse_enum(s, {BceMode::standard, BceMode::literal_positive_only}, "bce mode");
}

inline LclSpace lcl_space_from_string(const std::string& s) {
  return detail::parse_enum(s, {LclSpace::logit, LclSpace::sigmoid}, "lcl space");
}

inline PlateauRule plateau_rule_from_string(const std::string& s) {
  return detail::parse_enum(s, {PlateauRule::neither, PlateauRule::either}, "plateau rule");
}

inline nlohmann::json to_json(const TrainConfig& cfg) {
  return {
      {"epochs", cfg.epochs},
      {"lr_encoder", cfg.lr_encoder},
      {"lr_head", cfg.lr_head},
      {"adam_beta1", cfg.adam_beta1},
      {"adam_beta2", cfg.adam_beta2},
      {"adam_eps", cfg.adam_eps},
      {"plateau_patience", cfg.plateau_patience},
      {"plateau_factor", cfg.plateau_factor},
      {"plateau_rule", to_string(cfg.plateau_rule)},
      {"seed", cfg.seed},
      {"batch_size", cfg.batch_size},
      {"d_e", cfg.d_e},
      {"d_h", cfg.d_h},
      {"dropout_rate", cfg.dropout_rate},
      {"loss",
       {{"lambda", cfg.loss.lambda},
        {"bce_mode", to_string(cfg.loss.bce_mode)},
        {"lcl_space", to_string(cfg.loss.lcl_space)},
        {"rec_reg_weight", cfg.loss.rec_reg_weight},
        {"hilcl_mean", cfg.loss.hilcl_mean}}},
      {"schedule",
       {{"k", cfg.schedule.k},
        {"mode", to_string(cfg.schedule.mode)},
        {"drev", to_string(cfg.schedule.drev)}}},
      {"negatives",
       {{"kind", to_string(cfg.negatives.kind)},
        {"sample_size", cfg.negatives.sample_size},
        {"seed", cfg.negatives.seed}}},
      {"predict", {{"threshold", cfg.predict.threshold}}},
  };
}

/// Fills cfg from a (possibly partial) JSON object; absent keys keep their
/// current values so files merge under explicit flags.
inline void merge_from_json(TrainConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, "config must be a JSON object");
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.lr_encoder = j.value("lr_encoder", cfg.lr_encoder);
  cfg.lr_head = j.value("lr_head", cfg.lr_head);
  cfg.adam_beta1 = j.value("adam_beta1", cfg.adam_beta1);
  cfg.adam_beta2 = j.value("adam_beta2", cfg.adam_beta2);
  cfg.adam_eps = j.value("adam_eps", cfg.adam_eps);
  cfg.plateau_patience = j.value("plateau_patience", cfg.plateau_patience);
  cfg.plateau_factor = j.value("plateau_factor", cfg.plateau_factor);
  if (j.contains("plateau_rule"))
    cfg.plateau_rule = plateau_rule_from_string(j.at("plateau_rule").get<std::string>());
  cfg.seed = j.value("seed", cfg.seed);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.d_e = j.value("d_e", cfg.d_e);
  cfg.d_h = j.value("d_h", cfg.d_h);
  cfg.dropout_rate = j.value("dropout_rate", cfg.dropout_rate);
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    cfg.loss.lambda = l.value("lambda", cfg.loss.lambda);
    if (l.contains("bce_mode"))
      cfg.loss.bce_mode = bce_mode_from_string(l.at("bce_mode").get<std::string>());
    if (l.contains("lcl_space"))
      cfg.loss.lcl_space = lcl_space_from_string(l.at("lcl_space").get<std::string>());
    cfg.loss.rec_reg_weight = l.value("rec_reg_weight", cfg.loss.rec_reg_weight);
    cfg.loss.hilcl_mean = l.value("hilcl_mean", cfg.loss.hilcl_mean);
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    cfg.schedule.k = s.value("k", cfg.schedule.k);
    if (s.contains("mode"))
      cfg.schedule.mode = schedule_mode_from_string(s.at("mode").get<std::string>());
    if (s.contains("drev")) cfg.schedule.drev = drev_mode_from_string(s.at("drev").get<std::string>());
  }
  if (j.contains("negatives")) {
    const auto& n = j.at("negatives");
    if (n.contains("kind"))
      cfg.negatives.kind = negative_sampling_from_string(n.at("kind").get<std::string>());
    cfg.negatives.sample_size = n.value("sample_size", cfg.negatives.sample_size);
    cfg.negatives.seed = n.value("seed", cfg.negatives.seed);
  }
  if (j.contains("predict")) cfg.predict.threshold = j.at("predict").value("threshold", cfg.predict.threshold);
}

}  // namespace hilight
