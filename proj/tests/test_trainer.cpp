#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"
#include "semaug/trainer.hpp"

using namespace semaug;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.d_ff = 32;
  c.scn_windows = {2, 3};
  c.scn_maps = 4;
  c.warmup_steps = 50;
  c.lr_scale = 2.0;
  c.label_smoothing = 0.0;
  c.max_steps = 20;
  c.batch_tokens = 40;
  c.seed = 5;
  return c;
}

std::vector<SentencePair> toy_pairs() {
  return {{{4, 5, 6}, {6, 5, 4}}, {{7, 8}, {8, 7}}, {{9, 4, 5, 6}, {6, 5, 4, 9}}, {{10, 11}, {11, 10}}};
}

SyntheticRecord toy_record() {
  SyntheticRecord r;
  r.target = {6, 7, 8};
  r.real_source = Sentence{4, 5, 6, 7};
  r.synthetic_sources = {{4, 6, 5, 7}, {5, 4, 6, 7, 9}, {4, 5, 7}};
  r.seeds = {1, 2, 3};
  r.truncated = {false, false, false};
  return r;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("semaug_trainer_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("TrainConfig: lambda contract and JSON round trip") {
  CHECK_NOTHROW(TrainConfig{}.validate());
  CHECK_THROWS_AS(TrainConfig::from_json(R"({"lambda1": 0.6, "lambda2": 0.6})"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json(R"({"lambda1": 0.5, "lambda2": 0.4})"), ConfigError);
  const TrainConfig derived = TrainConfig::from_json(R"({"lambda1": 0.7})");
  CHECK(derived.lambda2 == doctest::Approx(0.3).epsilon(1e-15));
  CHECK_THROWS_AS(TrainConfig::from_json(R"({"lamda1": 0.7})"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json(R"({"gamma_ramp_steps": 0})"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json(R"({"d_model": "big"})"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json("[1]"), ConfigError);

  TrainConfig c = tiny_config();
  c.lambda1 = 0.25;
  c.lambda2 = 0.75;
  c.seed = 18446744073709551615ULL;
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.seed == c.seed);
  CHECK(back.scn_windows == c.scn_windows);

  const TrainConfig d;
  CHECK(d.adam_beta1 == 0.9);
  CHECK(d.adam_beta2 == 0.998);
  CHECK(d.adam_eps == 1e-9);
  CHECK(d.warmup_steps == 8000);
}

TEST_CASE("gamma_schedule: ramp endpoints and midpoint") {
  TrainConfig c;
  c.gamma_ramp_start = 100;
  c.gamma_ramp_steps = 400;
  CHECK(gamma_schedule(0, c) == 0.0);
  CHECK(gamma_schedule(99, c) == 0.0);
  CHECK(gamma_schedule(300, c) == 0.5);
  CHECK(gamma_schedule(500, c) == 1.0);
  CHECK(gamma_schedule(100000, c) == 1.0);
  double prev = 0.0;
  for (std::size_t s = 0; s < 700; ++s) {
    const double g = gamma_schedule(s, c);
    CHECK(g >= prev);
    CHECK(g <= 1.0);
    prev = g;
  }
}

TEST_CASE("mle_loss: uniform model and the log-likelihood oracle") {
  const TrainConfig cfg = tiny_config();
  Seq2SeqModel uniform(cfg.model(8, 8), 1);
  uniform.params().get("out.w").value.fill(0.0);
  uniform.params().get("out.b").value.fill(0.0);
  const std::vector<SentencePair> small{{{4, 5}, {5, 6, 7}}, {{6}, {4}}};
  CHECK(mle_loss(uniform, small) == doctest::Approx(std::log(8.0)).epsilon(1e-14));

  Seq2SeqModel model(cfg.model(12, 12), 2);
  const auto pairs = toy_pairs();
  double ll = 0.0;
  std::size_t tokens = 0;
  for (const auto& p : pairs) {
    ll += log_likelihood(model, p.src, p.tgt);
    tokens += p.tgt.size() + 1;
  }
  CHECK(mle_loss(model, pairs) == doctest::Approx(-ll / tokens).epsilon(1e-13));
  CHECK_THROWS_AS(mle_loss(model, std::vector<SentencePair>{}), std::invalid_argument);
}

TEST_CASE("train_mle: moving average of the loss decreases on a 4-pair overfit run") {
  TrainConfig cfg = tiny_config();
  cfg.max_steps = 200;
  cfg.batch_tokens = 1000;
  Seq2SeqModel model(cfg.model(12, 12), 3);
  const auto log = train_mle(model, toy_pairs(), cfg);
  REQUIRE(log.size() == 200);
  const std::size_t w = 20;
  double prev = 1e300;
  for (std::size_t start = 0; start + w <= log.size(); start += w) {
    double avg = 0.0;
    for (std::size_t i = start; i < start + w; ++i) avg += log[i].total / w;
    CHECK(avg < prev);
    prev = avg;
  }
  CHECK(log.back().total < 0.5 * log.front().total);
}

TEST_CASE("adam_step: zero gradient, descent direction, hand-stepped trace") {
  AdamConfig a;
  a.d_model = 4;
  a.warmup_steps = 3;
  Parameter w{"w", Tensor::vector({1.0})};
  std::vector<Parameter*> ps{&w};
  AdamState st;
  adam_step(ps, st, a, 1);
  CHECK(w.value[0] == 1.0);

  AdamState st2;
  w.grad[0] = 2.0 * w.value[0];  // d/dw w^2
  adam_step(ps, st2, a, 1);
  CHECK(w.value[0] < 1.0);
  CHECK(w.value[0] > 0.0);

  // f(u, v) = 3u^2 + 0.5v^2 - uv, ten steps from (1, -2)
  Parameter q{"q", Tensor::vector({1.0, -2.0})};
  std::vector<Parameter*> qs{&q};
  AdamState sq;
  double u = 1.0, v = -2.0, mu = 0, mv = 0, su = 0, sv = 0;
  for (std::size_t t = 1; t <= 10; ++t) {
    q.grad[0] = 6.0 * q.value[0] - q.value[1];
    q.grad[1] = q.value[1] - q.value[0];
    adam_step(qs, sq, a, t);

    const double gu = 6.0 * u - v, gv = v - u;
    const double lr = 1.0 / std::sqrt(4.0) * std::min(1.0 / std::sqrt(double(t)), double(t) * std::pow(3.0, -1.5));
    mu = 0.9 * mu + 0.1 * gu;
    mv = 0.9 * mv + 0.1 * gv;
    su = 0.998 * su + 0.002 * gu * gu;
    sv = 0.998 * sv + 0.002 * gv * gv;
    const double c1 = 1.0 - std::pow(0.9, double(t)), c2 = 1.0 - std::pow(0.998, double(t));
    u -= lr * (mu / c1) / (std::sqrt(su / c2) + 1e-9);
    v -= lr * (mv / c1) / (std::sqrt(sv / c2) + 1e-9);
    CHECK(std::abs(q.value[0] - u) < 1e-12);
    CHECK(std::abs(q.value[1] - v) < 1e-12);
  }

  Parameter other{"o", Tensor::vector({1.0, 2.0, 3.0})};
  std::vector<Parameter*> os{&other};
  CHECK_THROWS_AS(adam_step(os, sq, a, 11), ShapeError);
}

TEST_CASE("noam learning rate") {
  AdamConfig a;
  a.d_model = 64;
  a.warmup_steps = 8000;
  CHECK(noam_learning_rate(a, 8000) == doctest::Approx(0.125 / std::sqrt(8000.0)).epsilon(1e-14));
  CHECK(noam_learning_rate(a, 100) < noam_learning_rate(a, 200));
  CHECK(noam_learning_rate(a, 20000) < noam_learning_rate(a, 10000));
  CHECK_THROWS(noam_learning_rate(a, 0));
}

TEST_CASE("semaug_loss: degenerate weights reduce to the fused MLE term") {
  TrainConfig cfg = tiny_config();
  cfg.lambda1 = 1.0;
  cfg.lambda2 = 0.0;
  cfg.gamma_ramp_start = 1000;
  Seq2SeqModel model(cfg.model(12, 12), 4);
  Scn scn(cfg.scn(), 5);
  const SyntheticRecord r = toy_record();
  Rng rng(6);
  const LossReport rep = semaug_loss(model, scn, r, cfg, 3, rng);
  CHECK(rep.gamma_now == 0.0);

  Rng replay(6);
  replay.index(r.synthetic_sources.size());
  Graph g(false);
  const double oracle = fused_mle(g, model, scn, *r.real_source, r.target, LatentMode::stochastic, &replay).value().item();
  CHECK(std::abs(rep.total - oracle) < 1e-12);
  CHECK(rep.mle_x == oracle);
}

TEST_CASE("semaug_loss: identical sources give zero semantic loss") {
  TrainConfig cfg = tiny_config();
  Seq2SeqModel model(cfg.model(12, 12), 7);
  Scn scn(cfg.scn(), 8);
  SyntheticRecord r = toy_record();
  r.synthetic_sources = {*r.real_source};
  r.seeds = {1};
  r.truncated = {false};
  Rng rng(9);
  CHECK(semaug_loss(model, scn, r, cfg, 10000, rng).sem == 0.0);
}

TEST_CASE("semaug_loss: total equals the weighted component oracles") {
  TrainConfig cfg = tiny_config();
  cfg.gamma_ramp_steps = 1;
  Seq2SeqModel model(cfg.model(12, 12), 10);
  Scn scn(cfg.scn(), 11);
  const SyntheticRecord r = toy_record();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const LossReport rep = semaug_loss(model, scn, r, cfg, 50, rng);
    CHECK(rep.gamma_now == 1.0);

    Rng replay(seed);
    const Sentence& xbar = r.synthetic_sources[replay.index(r.synthetic_sources.size())];
    Graph g(false);
    const double mx = fused_mle(g, model, scn, *r.real_source, r.target, LatentMode::stochastic, &replay).value().item();
    const double mb = fused_mle(g, model, scn, xbar, r.target, LatentMode::stochastic, &replay).value().item();
    const double kl = kl_divergence(infer_semantics(model, scn, xbar, LatentMode::deterministic, nullptr).gaussian(),
                                    infer_semantics(model, scn, *r.real_source, LatentMode::deterministic, nullptr).gaussian());
    CHECK(std::abs(rep.total - (0.5 * mx + 0.5 * mb + kl)) < 1e-10);
    CHECK(std::abs(rep.total - (0.5 * rep.mle_x + 0.5 * rep.mle_xbar + rep.sem)) < 1e-10);
  }
  SyntheticRecord empty = r;
  empty.synthetic_sources.clear();
  Rng rng(0);
  CHECK_THROWS_AS(semaug_loss(model, scn, empty, cfg, 1, rng), std::invalid_argument);
}

TEST_CASE("with gamma = 0 and lambda2 = 0 semaug gradients equal fused-MLE gradients") {
  TrainConfig cfg = tiny_config();
  cfg.lambda1 = 1.0;
  cfg.lambda2 = 0.0;
  cfg.gamma_ramp_start = 1000;
  Seq2SeqModel model(cfg.model(12, 12), 12);
  Scn scn(cfg.scn(), 13);
  const SyntheticRecord r = toy_record();

  auto grads = [&](bool semaug) {
    model.params().zero_grad();
    scn.params().zero_grad();
    Rng rng(14);
    Graph g;
    if (semaug) {
      const SyntheticRecord* one[] = {&r};
      g.backward(semaug_terms(g, model, scn, one, cfg, 1, rng).total);
    } else {
      rng.index(r.synthetic_sources.size());
      g.backward(fused_mle(g, model, scn, *r.real_source, r.target, LatentMode::stochastic, &rng));
    }
    std::map<std::string, Tensor> out;
    for (const Parameter* p : model.params().all()) out.emplace(p->name, p->grad);
    return out;
  };
  const auto a = grads(true), b = grads(false);
  for (const auto& [name, ga] : a) {
    const Tensor& gb = b.at(name);
    for (std::size_t i = 0; i < ga.size(); ++i) CHECK_MESSAGE(std::abs(ga[i] - gb[i]) <= 1e-12, name);
  }
}

TEST_CASE("epoch_order and pack_batches") {
  Rng rng(15);
  const auto order = epoch_order(5, 3, 4, rng);
  CHECK(order.size() == 23);
  std::map<std::size_t, int> counts;
  for (std::size_t i : order) ++counts[i];
  for (std::size_t i = 0; i < 5; ++i) CHECK(counts[i] == 4);
  for (std::size_t i = 5; i < 8; ++i) CHECK(counts[i] == 1);

  const std::vector<std::size_t> idx{0, 1, 2, 3, 4};
  const std::vector<std::size_t> sizes{3, 4, 10, 2, 2};
  const auto batches = pack_batches(idx, [&](std::size_t i) { return sizes[i]; }, 8);
  CHECK(batches == std::vector<std::vector<std::size_t>>{{0, 1}, {2}, {3, 4}});
}

TEST_CASE("training is reproducible and reports reconstruct the total") {
  TrainConfig cfg = tiny_config();
  cfg.max_steps = 6;
  cfg.gamma_ramp_steps = 3;
  cfg.grad_accumulation = 2;
  std::vector<SyntheticRecord> recs;
  for (int i = 0; i < 4; ++i) {
    SyntheticRecord r = toy_record();
    r.target.push_back(4 + i);
    recs.push_back(r);
  }
  auto run = [&] {
    Seq2SeqModel model(cfg.model(12, 12), 16);
    Scn scn(cfg.scn(), 17);
    auto log = train_semaug(model, scn, recs, {}, cfg);
    return std::pair{log, model.state()};
  };
  const auto [log1, state1] = run();
  const auto [log2, state2] = run();
  CHECK(log1 == log2);
  CHECK(encode_checkpoint(state1) == encode_checkpoint(state2));
  REQUIRE(log1.size() == 6);
  for (const auto& r : log1) {
    CHECK(std::abs(r.total - (cfg.lambda1 * r.mle_x + cfg.lambda2 * r.mle_xbar + r.gamma_now * r.sem)) < 1e-10);
    CHECK(r.sem >= 0.0);
    CHECK(LossReport::from_json(r.to_json()) == r);
  }
}

TEST_CASE("run_phase: artifacts, checkpoint cadence and missing prerequisites") {
  TrainConfig cfg = tiny_config();
  cfg.max_steps = 4;
  cfg.checkpoint_every = 2;
  const auto dir = scratch("phase");

  PhaseJob fwd;
  fwd.phase = Phase::pretrain_forward;
  fwd.pairs = toy_pairs();
  fwd.src_vocab = 12;
  fwd.tgt_vocab = 12;
  fwd.out_dir = dir;
  const PhaseResult res = run_phase(fwd, cfg);
  CHECK(res.log.size() == 4);
  CHECK(res.checkpoints == std::vector<std::filesystem::path>{dir / "pretrain_forward.step2.ckpt", dir / "pretrain_forward.ckpt"});
  for (const auto& p : res.checkpoints) CHECK(std::filesystem::exists(p));
  std::ifstream log(res.loss_log);
  std::size_t lines = 0;
  for (std::string l; std::getline(log, l);) ++lines;
  CHECK(lines == 4);

  PhaseJob rev = fwd;
  rev.phase = Phase::pretrain_reverse;
  rev.src_vocab = 14;
  run_phase(rev, cfg);
  CHECK(Seq2SeqModel::from_state(load_checkpoint(dir / "pretrain_reverse.ckpt")).config().tgt_vocab == 14);

  PhaseJob sem;
  sem.phase = Phase::semaug;
  sem.records = {toy_record()};
  sem.out_dir = dir;
  sem.init_checkpoint = dir / "missing.ckpt";
  try {
    run_phase(sem, cfg);
    FAIL("expected a prerequisite error");
  } catch (const PrerequisiteError& e) {
    CHECK(std::string(e.what()).find("semaug") != std::string::npos);
  }
  sem.init_checkpoint = dir / "pretrain_forward.ckpt";
  const PhaseResult s = run_phase(sem, cfg);
  const NamedTensors final_state = load_checkpoint(dir / "semaug.ckpt");
  CHECK_NOTHROW(Scn::from_state(final_state));
  CHECK(s.log.back().step == 4);

  PhaseJob empty = fwd;
  empty.pairs.clear();
  CHECK_THROWS_AS(run_phase(empty, cfg), PrerequisiteError);
  std::filesystem::remove_all(dir);
}
