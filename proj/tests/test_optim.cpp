#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "hilight/config_io.hpp"
#include "hilight/optim.hpp"

#include "test_support.hpp"

using namespace hilight;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.lr_encoder = 3e-3;
  cfg.lr_head = 1e-2;
  cfg.d_e = 12;
  cfg.d_h = 12;
  cfg.batch_size = 8;
  cfg.loss.lambda = 0.05;
  cfg.schedule.k = 1;
  return cfg;
}

SynthResult tiny_corpus(std::uint64_t seed = 2023) {
  SynthSpec spec;
  spec.branching = {2, 2};
  spec.docs_train = 48;
  spec.docs_dev = 16;
  spec.docs_test = 16;
  spec.tokens_per_doc = 12;
  spec.noise_rate = 0.1;
  spec.multipath_prob = 0.2;
  spec.seed = seed;
  return generate_synthetic(spec);
}

std::string serialize_log(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  for (const EpochLog& e : log) out << e.to_json().dump() << '\n';
  return out.str();
}

}  // namespace

TEST_CASE("adam: zero gradients leave parameters unchanged but advance the step") {
  const ModelDims dims{3, 2, 2, 2};
  Rng rng(1);
  ModelParams params = ModelParams::init(dims, rng);
  const ModelParams before = params;
  OptimizerState state = OptimizerState::init(dims, tiny_config());
  adam_step(params, ModelParams::zeros(dims), state, tiny_config());
  CHECK(state.step == 1);
  CHECK(params.embeddings == before.embeddings);
  CHECK(params.head_weight == before.head_weight);
}

TEST_CASE("adam: matches the hand-evaluated recurrence on a scalar parameter") {
  TrainConfig cfg = tiny_config();
  cfg.lr_head = 0.1;
  const ModelDims dims{1, 1, 1, 1};
  ModelParams params = ModelParams::zeros(dims);
  ModelParams grads = ModelParams::zeros(dims);
  grads.head_bias[0] = 1.0;
  OptimizerState state = OptimizerState::init(dims, cfg);

  // first step magnitude is the learning rate up to eps
  adam_step(params, grads, state, cfg);
  CHECK(params.head_bias[0] == Catch::Approx(-0.1).epsilon(1e-6));

  // replay the published recurrence for several more steps
  double x = 0.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 6; ++t) {
    m = 0.9 * m + 0.1 * 1.0;
    v = 0.999 * v + 0.001 * 1.0;
    const double m_hat = m / (1.0 - std::pow(0.9, t));
    const double v_hat = v / (1.0 - std::pow(0.999, t));
    x -= 0.1 * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    if (t > 1) adam_step(params, grads, state, cfg);
  }
  CHECK(params.head_bias[0] == Catch::Approx(x));
}

TEST_CASE("adam: parameter groups update under their own learning rates") {
  TrainConfig cfg = tiny_config();
  cfg.lr_encoder = 0.5;
  cfg.lr_head = 0.001;
  const ModelDims dims{1, 1, 1, 1};
  ModelParams params = ModelParams::zeros(dims);
  ModelParams grads = ModelParams::zeros(dims);
  grads.enc_bias[0] = 1.0;
  grads.head_bias[0] = 1.0;
  OptimizerState state = OptimizerState::init(dims, cfg);
  adam_step(params, grads, state, cfg);
  CHECK(params.enc_bias[0] == Catch::Approx(-0.5).epsilon(1e-6));
  CHECK(params.head_bias[0] == Catch::Approx(-0.001).epsilon(1e-6));
  CHECK(params.embeddings(0, 0) == 0.0);  // zero gradient group member
}

TEST_CASE("adam: non-finite gradients abort with diagnostics") {
  const ModelDims dims{2, 2, 2, 2};
  ModelParams params = ModelParams::zeros(dims);
  ModelParams grads = ModelParams::zeros(dims);
  grads.enc_weight(1, 0) = std::numeric_limits<double>::quiet_NaN();
  OptimizerState state = OptimizerState::init(dims, tiny_config());
  try {
    adam_step(params, grads, state, tiny_config());
    FAIL("expected NonFiniteGradient");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteGradient);
    CHECK(std::string(e.what()).find("enc_weight") != std::string::npos);
  }
}

TEST_CASE("plateau: strictly improving metrics never decay") {
  TrainConfig cfg = tiny_config();
  OptimizerState opt = OptimizerState::init({2, 2, 2, 2}, cfg);
  PlateauState ps;
  for (int e = 0; e < 30; ++e)
    CHECK_FALSE(plateau_scheduler(0.5 + 0.01 * e, 0.4 + 0.01 * e, ps, opt, cfg));
  CHECK(opt.lr_head == cfg.lr_head);
}

TEST_CASE("plateau: five flat epochs trigger exactly one decay") {
  TrainConfig cfg = tiny_config();
  cfg.lr_head = 1e-3;
  OptimizerState opt = OptimizerState::init({2, 2, 2, 2}, cfg);
  PlateauState ps;
  int decays = 0;
  for (int e = 0; e <= 5; ++e) decays += plateau_scheduler(0.7, 0.6, ps, opt, cfg);
  CHECK(decays == 1);
  CHECK(opt.lr_head == Catch::Approx(8e-4));
  CHECK(opt.lr_encoder == Catch::Approx(cfg.lr_encoder * 0.8));
}

TEST_CASE("plateau: one improving metric is enough under the default rule") {
  TrainConfig cfg = tiny_config();
  OptimizerState opt = OptimizerState::init({2, 2, 2, 2}, cfg);
  PlateauState ps;
  for (int e = 0; e < 20; ++e)
    CHECK_FALSE(plateau_scheduler(0.7, 0.4 + 0.01 * e, ps, opt, cfg));  // micro flat, macro rising
  CHECK(opt.lr_head == cfg.lr_head);
}

TEST_CASE("plateau: the either rule decays when one metric stalls") {
  TrainConfig cfg = tiny_config();
  cfg.plateau_rule = PlateauRule::either;
  OptimizerState opt = OptimizerState::init({2, 2, 2, 2}, cfg);
  PlateauState ps;
  int first_decay = -1;
  for (int e = 0; e < 20 && first_decay < 0; ++e)
    if (plateau_scheduler(0.7, 0.4 + 0.01 * e, ps, opt, cfg)) first_decay = e;
  CHECK(first_decay == 5);  // micro stalls from the second observation on
}

TEST_CASE("plateau: decays keep compounding after resets") {
  TrainConfig cfg = tiny_config();
  cfg.lr_head = 1.0;
  cfg.plateau_patience = 2;
  OptimizerState opt = OptimizerState::init({2, 2, 2, 2}, cfg);
  PlateauState ps;
  int decays = 0;
  for (int e = 0; e < 9; ++e) decays += plateau_scheduler(0.5, 0.5, ps, opt, cfg);
  CHECK(decays == 4);  // epochs 2,4,6,8
  CHECK(opt.lr_head == Catch::Approx(std::pow(0.8, 4)));
}

TEST_CASE("train: a fixed seed reproduces the run bit for bit") {
  const SynthResult corpus = tiny_corpus();
  TrainConfig cfg = tiny_config();
  const TrainResult a = train(corpus.train, corpus.dev, corpus.taxonomy, corpus.vocab.size(), cfg);
  const TrainResult b = train(corpus.train, corpus.dev, corpus.taxonomy, corpus.vocab.size(), cfg);

  CHECK(serialize_log(a.log) == serialize_log(b.log));
  CHECK(a.best_params.head_weight == b.best_params.head_weight);
  CHECK(a.best_params.embeddings == b.best_params.embeddings);
  CHECK(a.best_epoch == b.best_epoch);

  TrainConfig other = cfg;
  other.seed = cfg.seed + 1;
  const TrainResult c = train(corpus.train, corpus.dev, corpus.taxonomy, corpus.vocab.size(), other);
  CHECK(serialize_log(c.log) != serialize_log(a.log));
}

TEST_CASE("train: lambda zero is the plain BCE baseline") {
  const SynthResult corpus = tiny_corpus();
  TrainConfig cfg = tiny_config();
  cfg.loss.lambda = 0.0;
  const TrainResult r = train(corpus.train, corpus.dev, corpus.taxonomy, corpus.vocab.size(), cfg);
  for (const EpochLog& e : r.log) {
    CHECK(e.total == e.bce);
    CHECK(e.rec_reg == 0.0);
  }
}

TEST_CASE("train: learning rates only ever shrink, by the exact factor") {
  const SynthResult corpus = tiny_corpus();
  TrainConfig cfg = tiny_config();
  cfg.epochs = 20;
  cfg.plateau_patience = 2;
  const TrainResult r = train(corpus.train, corpus.dev, corpus.taxonomy, corpus.vocab.size(), cfg);
  for (std::size_t e = 1; e < r.log.size(); ++e) {
    const double ratio = r.log[e].lr_head / r.log[e - 1].lr_head;
    CHECK((std::fabs(ratio - 1.0) < 1e-12 || std::fabs(ratio - 0.8) < 1e-12));
    CHECK(r.log[e].lr_head <= r.log[e - 1].lr_head);
  }
}

TEST_CASE("train: the loop epoch drives the curriculum") {
  const SynthResult corpus = tiny_corpus();
  TrainConfig cfg = tiny_config();
  cfg.epochs = 2;
  cfg.loss.lambda = 0.0;  // identical trajectories, only the logged hilcl differs
  TrainConfig slow = cfg;
  cfg.schedule.k = 1;
  slow.schedule.k = 100;

  const TrainResult fast_r = train(corpus.train, corpus.dev, corpus.taxonomy, corpus.vocab.size(), cfg);
  const TrainResult slow_r = train(corpus.train, corpus.dev, corpus.taxonomy, corpus.vocab.size(), slow);

  // epoch 0 unlocks only the leaf level either way
  CHECK(fast_r.log[0].hilcl == Catch::Approx(slow_r.log[0].hilcl));
  // epoch 1 adds the height-1 terms only when k == 1
  CHECK(fast_r.log[1].hilcl > slow_r.log[1].hilcl);
}

TEST_CASE("train: snapshot tracks the best dev Macro-F1") {
  const SynthResult corpus = tiny_corpus();
  const TrainResult r =
      train(corpus.train, corpus.dev, corpus.taxonomy, corpus.vocab.size(), tiny_config());
  double best = -1.0;
  int best_epoch = -1;
  for (const EpochLog& e : r.log)
    if (e.dev_macro_f1 > best) {
      best = e.dev_macro_f1;
      best_epoch = e.epoch;
    }
  CHECK(r.best_dev_macro == best);
  CHECK(r.best_epoch == best_epoch);
}

TEST_CASE("train: empty splits are rejected") {
  const SynthResult corpus = tiny_corpus();
  CHECK_THROWS_MATCHES(
      train({}, corpus.dev, corpus.taxonomy, corpus.vocab.size(), tiny_config()), Error,
      Catch::Matchers::Predicate<Error>(
          [](const Error& e) { return e.code() == ErrorCode::EmptyDataset; }));
  CHECK_THROWS_MATCHES(
      train(corpus.train, {}, corpus.taxonomy, corpus.vocab.size(), tiny_config()), Error,
      Catch::Matchers::Predicate<Error>(
          [](const Error& e) { return e.code() == ErrorCode::EmptyDataset; }));
}

TEST_CASE("train: converges on a separable synthetic corpus") {
  SynthSpec spec;
  spec.branching = {3, 3};
  spec.docs_train = 200;
  spec.docs_dev = 60;
  spec.docs_test = 60;
  spec.tokens_per_doc = 16;
  spec.noise_rate = 0.0;
  spec.multipath_prob = 0.0;
  spec.seed = 11;
  const SynthResult corpus = generate_synthetic(spec);

  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.lr_encoder = 3e-3;
  cfg.lr_head = 1e-2;
  cfg.d_e = 32;
  cfg.d_h = 32;
  cfg.batch_size = 16;
  cfg.loss.lambda = 0.05;
  cfg.schedule.k = 2;
  const TrainResult r = train(corpus.train, corpus.dev, corpus.taxonomy, corpus.vocab.size(), cfg);

  double best_micro = 0.0;
  for (const EpochLog& e : r.log) best_micro = std::max(best_micro, e.dev_micro_f1);
  CHECK(best_micro > 0.95);
}

TEST_CASE("evaluate consumes precomputed features through the same path") {
  const ModelDims dims{2, 2, 3, 2};
  Rng rng(5);
  const ModelParams params = ModelParams::init(dims, rng);
  const Taxonomy tax = Taxonomy::parse({"Root\tA\tB"});

  Dataset ds;
  Document doc;
  doc.id = "f1";
  doc.feature = {0.1, -0.2, 0.4};
  doc.labels = tax.validate_labelset({0});
  ds.push_back(doc);
  const EvalResult r = evaluate(params, ds, tax, PredictConfig{});
  CHECK(r.predictions.size() == 1);
  CHECK(r.counts.tp[0] + r.counts.fn[0] == 1);
}

TEST_CASE("train config serialization round-trips through json") {
  TrainConfig cfg = tiny_config();
  cfg.plateau_rule = PlateauRule::either;
  cfg.loss.bce_mode = BceMode::literal_positive_only;
  cfg.loss.lcl_space = LclSpace::sigmoid;
  cfg.schedule.mode = ScheduleMode::coarse_to_fine;
  cfg.schedule.drev = DrevMode::min_leaf_dist;
  cfg.negatives.kind = NegativeSampling::random_k;
  cfg.negatives.sample_size = 7;
  cfg.predict.threshold = 0.35;

  TrainConfig restored;
  merge_from_json(restored, to_json(cfg));
  CHECK(to_json(restored) == to_json(cfg));

  // partial objects only touch the named fields
  TrainConfig partial;
  merge_from_json(partial, nlohmann::json{{"loss", {{"lambda", 0.5}}}});
  CHECK(partial.loss.lambda == 0.5);
  CHECK(partial.epochs == TrainConfig{}.epochs);
  CHECK(partial.loss.bce_mode == BceMode::standard);
}
