#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hilight/common.hpp"
#include "hilight/config_io.hpp"
#include "hilight/data.hpp"
#include "hilight/losses.hpp"
#include "hilight/metrics.hpp"
#include "hilight/model.hpp"
#include "hilight/optim.hpp"
#include "hilight/sampling.hpp"
#include "hilight/taxonomy.hpp"

namespace hilight::cli {

namespace detail {

inline std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::string fmt_metric(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", x);
  return buf;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path + "'");
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::MalformedLine, "'" + path + "': " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write '" + path + "'");
  out << content;
}

inline Taxonomy load_taxonomy_file(const std::string& path) {
  return Taxonomy::parse(read_lines(path));
}

inline Checkpoint load_checkpoint_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path + "'");
  return load_checkpoint(in);
}

inline std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(text);
  while (std::getline(ss, field, ','))
    if (!field.empty()) out.push_back(field);
  return out;
}

inline std::string join_names(const Taxonomy& tax, const std::vector<LabelId>& ids) {
  std::string out;
  for (LabelId i : ids) {
    if (!out.empty()) out += ' ';
    out += tax.name(i);
  }
  return out.empty() ? "(none)" : out;
}

struct TrainCli {
  std::string taxonomy_path, train_path, dev_path, config_path, out_dir;
  int min_count = 1;
  int max_vocab_size = 0;
};

inline int run_train(const TrainCli& io, const TrainConfig& cfg) {
  const Taxonomy tax = load_taxonomy_file(io.taxonomy_path);
  const Vocabulary vocab = build_vocab({io.train_path}, io.min_count, io.max_vocab_size);
  const Dataset train_set = load_corpus(io.train_path, tax, vocab);
  const Dataset dev_set = load_corpus(io.dev_path, tax, vocab);

  const TrainResult result = train(train_set, dev_set, tax, vocab.size(), cfg);

  std::filesystem::create_directories(io.out_dir);
  {
    std::ofstream log(io.out_dir + "/train_log.jsonl");
    if (!log) fail(ErrorCode::IoError, "cannot write training log");
    for (const EpochLog& entry : result.log) log << entry.to_json().dump() << '\n';
  }
  {
    std::ofstream ckpt(io.out_dir + "/model.json");
    if (!ckpt) fail(ErrorCode::IoError, "cannot write checkpoint");
    save_checkpoint(ckpt, result.best_params, vocab.tokens());
  }
  {
    nlohmann::json echo{{"train_config", to_json(cfg)},
                        {"vocab", {{"min_count", io.min_count}, {"max_size", io.max_vocab_size}}}};
    write_text_file(io.out_dir + "/config.json", echo.dump(2) + "\n");
  }

  const EpochLog& best = result.log.at(static_cast<std::size_t>(result.best_epoch));
  std::cout << "train: best_epoch=" << result.best_epoch
            << " dev_micro=" << fmt_metric(best.dev_micro_f1)
            << " dev_macro=" << fmt_metric(best.dev_macro_f1)
            << " dev_violation_rate=" << fmt_metric(best.dev_violation_rate) << '\n';
  return 0;
}

struct EvalCli {
  std::string taxonomy_path, data_path, model_path, out_dir;
  double threshold = 0.5;
  bool write_csv = false;
};

inline int run_eval(const EvalCli& io) {
  const Taxonomy tax = load_taxonomy_file(io.taxonomy_path);
  const Checkpoint ckpt = load_checkpoint_file(io.model_path);
  if (ckpt.params.dims().num_labels != tax.num_labels())
    fail(ErrorCode::DimensionMismatch, "checkpoint label count does not match the taxonomy");
  const Vocabulary vocab = Vocabulary::from_tokens(ckpt.vocab);
  const Dataset data = load_corpus(io.data_path, tax, vocab);

  PredictConfig predict_cfg{io.threshold};
  const EvalResult result = evaluate(ckpt.params, data, tax, predict_cfg);
  const std::vector<double> per_label = labelwise_f1(result.counts);

  nlohmann::json labels = nlohmann::json::array();
  for (LabelId i = 0; i < tax.num_labels(); ++i)
    labels.push_back({{"name", tax.name(i)},
                      {"f1", per_label[i]},
                      {"tp", result.counts.tp[i]},
                      {"fp", result.counts.fp[i]},
                      {"fn", result.counts.fn[i]}});
  nlohmann::json report{
      {"micro_f1", result.micro_f1},
      {"macro_f1", result.macro_f1},
      {"threshold", io.threshold},
      {"documents", data.size()},
      {"labels", std::move(labels)},
      {"consistency",
       {{"parent_without_child", result.consistency.parent_without_child},
        {"child_without_parent", result.consistency.child_without_parent},
        {"audited", result.consistency.audited},
        {"violation_rate", result.consistency.violation_rate}}},
  };

  std::filesystem::create_directories(io.out_dir);
  write_text_file(io.out_dir + "/eval_report.json", report.dump(2) + "\n");
  if (io.write_csv) {
    std::string csv = "label,f1,support\n";
    for (LabelId i = 0; i < tax.num_labels(); ++i) {
      csv += tax.name(i);
      csv += ',';
      csv += fmt_double(per_label[i]);
      csv += ',';
      csv += std::to_string(result.counts.tp[i] + result.counts.fn[i]);
      csv += '\n';
    }
    write_text_file(io.out_dir + "/labelwise_f1.csv", csv);
  }

  std::cout << "eval: micro=" << fmt_metric(result.micro_f1)
            << " macro=" << fmt_metric(result.macro_f1)
            << " violation_rate=" << fmt_metric(result.consistency.violation_rate) << '\n';
  return 0;
}

inline int run_synth(const std::string& spec_path, const std::string& out_dir,
                     std::uint64_t seed_override, bool seed_given) {
  SynthSpec spec;
  if (!spec_path.empty()) spec = SynthSpec::from_json(read_json_file(spec_path));
  if (seed_given) spec.seed = seed_override;
  const SynthResult result = generate_synthetic(spec);

  std::filesystem::create_directories(out_dir);
  write_taxonomy_file(out_dir + "/taxonomy.txt", result.taxonomy);
  write_corpus_file(out_dir + "/train.jsonl", result.train, result.taxonomy, result.vocab);
  write_corpus_file(out_dir + "/dev.jsonl", result.dev, result.taxonomy, result.vocab);
  write_corpus_file(out_dir + "/test.jsonl", result.test, result.taxonomy, result.vocab);
  write_text_file(out_dir + "/spec.json", spec.to_json().dump(2) + "\n");

  int leaves = 0;
  for (LabelId i = 0; i < result.taxonomy.num_labels(); ++i)
    if (result.taxonomy.is_leaf(i)) ++leaves;
  std::cout << "synth: labels=" << result.taxonomy.num_labels() << " leaves=" << leaves
            << " vocab=" << result.vocab.size() << " train=" << result.train.size()
            << " dev=" << result.dev.size() << " test=" << result.test.size() << '\n';
  return 0;
}

struct InspectCli {
  std::string taxonomy_path, label, positives_csv;
  std::string mode = "local_hard";
  int random_k_size = 0;
  std::uint64_t random_k_seed = 0;
};

inline int run_inspect(const InspectCli& io) {
  const Taxonomy tax = load_taxonomy_file(io.taxonomy_path);
  const auto id = tax.id_of(io.label);
  if (!id) fail(ErrorCode::UnknownLabelName, "unknown label '" + io.label + "'");

  std::vector<LabelId> positive_ids;
  if (io.positives_csv.empty()) {
    // Minimal valid positive set: the label plus its ancestors.
    for (std::optional<LabelId> cur = *id; cur; cur = tax.parent(*cur)) positive_ids.push_back(*cur);
  } else {
    for (const std::string& name : split_csv(io.positives_csv)) {
      if (name == tax.root_name()) continue;
      const auto pid = tax.id_of(name);
      if (!pid) fail(ErrorCode::UnknownLabelName, "unknown label '" + name + "'");
      positive_ids.push_back(*pid);
    }
  }
  const LabelSet positives = tax.validate_labelset(std::move(positive_ids));

  NegativeMode mode;
  mode.kind = negative_sampling_from_string(io.mode);
  mode.sample_size = io.random_k_size;
  mode.seed = io.random_k_seed;
  const NegativeIndex index = NegativeIndex::build(tax, mode);
  const Bitmask hard = index.hard_negatives(*id, positives);

  std::cout << "label: " << io.label << " (id " << *id << ", depth " << tax.depth(*id)
            << ", height " << tax.height(*id) << ")\n"
            << "mode: " << io.mode << '\n'
            << "candidates: " << join_names(tax, index.candidates(*id).to_vector()) << '\n'
            << "positives: " << join_names(tax, positives.ids) << '\n'
            << "hard_negatives: " << join_names(tax, hard.to_vector()) << '\n';
  return 0;
}

struct ExportCli {
  std::string model_path, taxonomy_path, data_path, out_path;
};

inline int run_export(const ExportCli& io) {
  const Taxonomy tax = load_taxonomy_file(io.taxonomy_path);
  const Checkpoint ckpt = load_checkpoint_file(io.model_path);
  if (ckpt.params.dims().num_labels != tax.num_labels())
    fail(ErrorCode::DimensionMismatch, "checkpoint label count does not match the taxonomy");
  const int d_h = ckpt.params.dims().d_h;

  std::ofstream out(io.out_path);
  if (!out) fail(ErrorCode::IoError, "cannot write '" + io.out_path + "'");
  out << "kind,name";
  for (int j = 0; j < d_h; ++j) out << ",v" << j;
  out << '\n';

  for (LabelId i = 0; i < tax.num_labels(); ++i) {
    out << "label," << tax.name(i);
    const double* row = ckpt.params.head_weight.row(i);
    for (int j = 0; j < d_h; ++j) out << ',' << fmt_double(row[j]);
    out << '\n';
  }

  std::size_t docs = 0;
  if (!io.data_path.empty()) {
    const Vocabulary vocab = Vocabulary::from_tokens(ckpt.vocab);
    const Dataset data = load_corpus(io.data_path, tax, vocab);
    Rng unused(0);
    for (const Document& doc : data) {
      const ForwardTrace trace =
          doc.has_feature() ? encode_precomputed(ckpt.params, doc.feature, 0.0, unused, false)
                            : encode(ckpt.params, doc.token_ids, 0.0, unused, false);
      out << "doc," << doc.id;
      for (int j = 0; j < d_h; ++j) out << ',' << fmt_double(trace.hidden[j]);
      out << '\n';
    }
    docs = data.size();
  }

  std::cout << "export-label-space: labels=" << tax.num_labels() << " docs=" << docs << " -> "
            << io.out_path << '\n';
  return 0;
}

}  // namespace detail

/// Dispatches the toolkit subcommands. Usage errors exit with 2, data and
/// validation errors with 1.
inline int run(int argc, const char* const* argv) {
  CLI::App app{"hierarchical text classification toolkit"};
  app.require_subcommand(1);

  // --- synth ---
  auto* synth = app.add_subcommand("synth", "generate a synthetic hierarchical corpus");
  std::string synth_spec, synth_out;
  std::uint64_t synth_seed = 0;
  synth->add_option("--spec", synth_spec, "synthesis spec (JSON)");
  synth->add_option("--out", synth_out, "output directory")->required();
  auto* synth_seed_opt = synth->add_option("--seed", synth_seed, "override the spec seed");

  // --- train ---
  auto* train_cmd = app.add_subcommand("train", "train a model");
  detail::TrainCli train_io;
  train_cmd->add_option("--taxonomy", train_io.taxonomy_path, "taxonomy file")->required();
  train_cmd->add_option("--train", train_io.train_path, "training corpus (JSON lines)")->required();
  train_cmd->add_option("--dev", train_io.dev_path, "dev corpus (JSON lines)")->required();
  train_cmd->add_option("--config", train_io.config_path, "config file (JSON), flags win");
  train_cmd->add_option("--out", train_io.out_dir, "output directory")->required();
  train_cmd->add_option("--min-count", train_io.min_count, "vocabulary min token count");
  train_cmd->add_option("--max-vocab-size", train_io.max_vocab_size, "vocabulary cap (0 = none)");

  TrainConfig defaults;
  int f_epochs = defaults.epochs, f_patience = defaults.plateau_patience;
  int f_batch = defaults.batch_size, f_de = defaults.d_e, f_dh = defaults.d_h;
  int f_k = defaults.schedule.k, f_rk_size = defaults.negatives.sample_size;
  double f_lr_enc = defaults.lr_encoder, f_lr_head = defaults.lr_head;
  double f_beta1 = defaults.adam_beta1, f_beta2 = defaults.adam_beta2, f_eps = defaults.adam_eps;
  double f_factor = defaults.plateau_factor, f_dropout = defaults.dropout_rate;
  double f_lambda = defaults.loss.lambda, f_rec = defaults.loss.rec_reg_weight;
  double f_threshold = defaults.predict.threshold;
  bool f_hilcl_mean = defaults.loss.hilcl_mean;
  std::uint64_t f_seed = defaults.seed, f_rk_seed = defaults.negatives.seed;
  std::string f_rule = to_string(defaults.plateau_rule);
  std::string f_schedule = to_string(defaults.schedule.mode);
  std::string f_drev = to_string(defaults.schedule.drev);
  std::string f_negatives = to_string(defaults.negatives.kind);
  std::string f_bce = to_string(defaults.loss.bce_mode);
  std::string f_lcl = to_string(defaults.loss.lcl_space);

  auto* o_epochs = train_cmd->add_option("--epochs", f_epochs, "training epochs");
  auto* o_lr_enc = train_cmd->add_option("--lr-encoder", f_lr_enc, "encoder learning rate");
  auto* o_lr_head = train_cmd->add_option("--lr-head", f_lr_head, "head learning rate");
  auto* o_beta1 = train_cmd->add_option("--adam-beta1", f_beta1, "Adam beta1");
  auto* o_beta2 = train_cmd->add_option("--adam-beta2", f_beta2, "Adam beta2");
  auto* o_eps = train_cmd->add_option("--adam-eps", f_eps, "Adam epsilon");
  auto* o_patience = train_cmd->add_option("--plateau-patience", f_patience, "plateau patience");
  auto* o_factor = train_cmd->add_option("--plateau-factor", f_factor, "plateau decay factor");
  auto* o_rule = train_cmd->add_option("--plateau-rule", f_rule, "plateau rule")
                     ->check(CLI::IsMember({"neither", "either"}));
  auto* o_seed = train_cmd->add_option("--seed", f_seed, "random seed");
  auto* o_batch = train_cmd->add_option("--batch-size", f_batch, "batch size");
  auto* o_de = train_cmd->add_option("--d-e", f_de, "embedding width");
  auto* o_dh = train_cmd->add_option("--d-h", f_dh, "hidden width");
  auto* o_dropout = train_cmd->add_option("--dropout-rate", f_dropout, "dropout rate");
  auto* o_lambda = train_cmd->add_option("--lambda", f_lambda, "contrastive balancing factor");
  auto* o_bce = train_cmd->add_option("--bce-mode", f_bce, "BCE form")
                    ->check(CLI::IsMember({"standard", "literal_positive_only"}));
  auto* o_lcl = train_cmd->add_option("--lcl-space", f_lcl, "contrast space")
                    ->check(CLI::IsMember({"logit", "sigmoid"}));
  auto* o_rec = train_cmd->add_option("--rec-reg-weight", f_rec, "recursive regularization weight");
  auto* o_hmean = train_cmd->add_flag("--hilcl-mean", f_hilcl_mean, "mean-normalize the contrast sum");
  auto* o_k = train_cmd->add_option("--k", f_k, "epochs per curriculum level");
  auto* o_schedule = train_cmd->add_option("--schedule", f_schedule, "curriculum order")
                         ->check(CLI::IsMember({"fine_to_coarse", "coarse_to_fine", "all_at_once"}));
  auto* o_drev = train_cmd->add_option("--drev", f_drev, "reverse-depth definition")
                     ->check(CLI::IsMember({"height", "min_leaf_dist"}));
  auto* o_negatives =
      train_cmd->add_option("--negatives", f_negatives, "negative sampling mode")
          ->check(CLI::IsMember({"local_hard", "random_k", "siblings_only", "subtree_only"}));
  auto* o_rk_size = train_cmd->add_option("--random-k-size", f_rk_size, "random_k sample size (0 = auto)");
  auto* o_rk_seed = train_cmd->add_option("--random-k-seed", f_rk_seed, "random_k seed (0 = train seed)");
  auto* o_threshold = train_cmd->add_option("--threshold", f_threshold, "prediction threshold");

  // --- eval ---
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  detail::EvalCli eval_io;
  eval_cmd->add_option("--taxonomy", eval_io.taxonomy_path, "taxonomy file")->required();
  eval_cmd->add_option("--data", eval_io.data_path, "corpus to evaluate (JSON lines)")->required();
  eval_cmd->add_option("--model", eval_io.model_path, "checkpoint file")->required();
  eval_cmd->add_option("--out", eval_io.out_dir, "output directory")->required();
  eval_cmd->add_option("--threshold", eval_io.threshold, "prediction threshold");
  eval_cmd->add_flag("--csv", eval_io.write_csv, "also write labelwise_f1.csv");

  // --- inspect-negatives ---
  auto* inspect_cmd = app.add_subcommand("inspect-negatives", "show candidate and hard negative sets");
  detail::InspectCli inspect_io;
  inspect_cmd->add_option("--taxonomy", inspect_io.taxonomy_path, "taxonomy file")->required();
  inspect_cmd->add_option("--label", inspect_io.label, "label name")->required();
  inspect_cmd->add_option("--positives", inspect_io.positives_csv,
                          "comma-separated positive label names (default: label + ancestors)");
  inspect_cmd->add_option("--mode", inspect_io.mode, "negative sampling mode")
      ->check(CLI::IsMember({"local_hard", "random_k", "siblings_only", "subtree_only"}));
  inspect_cmd->add_option("--random-k-size", inspect_io.random_k_size, "random_k sample size");
  inspect_cmd->add_option("--random-k-seed", inspect_io.random_k_seed, "random_k seed");

  // --- export-label-space ---
  auto* export_cmd = app.add_subcommand("export-label-space",
                                        "dump classifier rows (and document vectors) as CSV");
  detail::ExportCli export_io;
  export_cmd->add_option("--model", export_io.model_path, "checkpoint file")->required();
  export_cmd->add_option("--taxonomy", export_io.taxonomy_path, "taxonomy file")->required();
  export_cmd->add_option("--data", export_io.data_path, "optional corpus for document vectors");
  export_cmd->add_option("--out", export_io.out_path, "output CSV path")->required();

  // --- param-count ---
  auto* count_cmd = app.add_subcommand("param-count", "trainable parameter arithmetic");
  int pc_vocab = 0, pc_de = 0, pc_dh = 0, pc_c = 0;
  auto* o_pc_vocab = count_cmd->add_option("--vocab", pc_vocab, "vocabulary size");
  auto* o_pc_de = count_cmd->add_option("--d-e", pc_de, "embedding width");
  count_cmd->add_option("--d-h", pc_dh, "hidden width")->required();
  count_cmd->add_option("--c", pc_c, "taxonomy size")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (synth->parsed())
      return detail::run_synth(synth_spec, synth_out, synth_seed, synth_seed_opt->count() > 0);

    if (train_cmd->parsed()) {
      TrainConfig cfg;
      if (!train_io.config_path.empty())
        merge_from_json(cfg, detail::read_json_file(train_io.config_path));
      if (o_epochs->count()) cfg.epochs = f_epochs;
      if (o_lr_enc->count()) cfg.lr_encoder = f_lr_enc;
      if (o_lr_head->count()) cfg.lr_head = f_lr_head;
      if (o_beta1->count()) cfg.adam_beta1 = f_beta1;
      if (o_beta2->count()) cfg.adam_beta2 = f_beta2;
      if (o_eps->count()) cfg.adam_eps = f_eps;
      if (o_patience->count()) cfg.plateau_patience = f_patience;
      if (o_factor->count()) cfg.plateau_factor = f_factor;
      if (o_rule->count()) cfg.plateau_rule = plateau_rule_from_string(f_rule);
      if (o_seed->count()) cfg.seed = f_seed;
      if (o_batch->count()) cfg.batch_size = f_batch;
      if (o_de->count()) cfg.d_e = f_de;
      if (o_dh->count()) cfg.d_h = f_dh;
      if (o_dropout->count()) cfg.dropout_rate = f_dropout;
      if (o_lambda->count()) cfg.loss.lambda = f_lambda;
      if (o_bce->count()) cfg.loss.bce_mode = bce_mode_from_string(f_bce);
      if (o_lcl->count()) cfg.loss.lcl_space = lcl_space_from_string(f_lcl);
      if (o_rec->count()) cfg.loss.rec_reg_weight = f_rec;
      if (o_hmean->count()) cfg.loss.hilcl_mean = f_hilcl_mean;
      if (o_k->count()) cfg.schedule.k = f_k;
      if (o_schedule->count()) cfg.schedule.mode = schedule_mode_from_string(f_schedule);
      if (o_drev->count()) cfg.schedule.drev = drev_mode_from_string(f_drev);
      if (o_negatives->count()) cfg.negatives.kind = negative_sampling_from_string(f_negatives);
      if (o_rk_size->count()) cfg.negatives.sample_size = f_rk_size;
      if (o_rk_seed->count()) cfg.negatives.seed = f_rk_seed;
      if (o_threshold->count()) cfg.predict.threshold = f_threshold;
      return detail::run_train(train_io, cfg);
    }

    if (eval_cmd->parsed()) return detail::run_eval(eval_io);
    if (inspect_cmd->parsed()) return detail::run_inspect(inspect_io);
    if (export_cmd->parsed()) return detail::run_export(export_io);

    if (count_cmd->parsed()) {
      std::cout << "head_params=" << head_param_count(pc_dh, pc_c);
      if (o_pc_vocab->count() && o_pc_de->count())
        std::cout << " total_params=" << param_count(pc_vocab, pc_de, pc_dh, pc_c);
      std::cout << '\n';
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

inline int run(const std::vector<std::string>& args) {
  std::vector<std::string> argv_storage;
  argv_storage.reserve(args.size() + 1);
  argv_storage.push_back("hilight");
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  argv.reserve(argv_storage.size());
  for (const std::string& a : argv_storage) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace hilight::cli
