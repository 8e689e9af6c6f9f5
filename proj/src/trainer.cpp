#include "semaug/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

namespace semaug {

using ordered_json = nlohmann::ordered_json;

// ---- config ---------------------------------------------------------------

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("train config: " + what); };
  if (!(lambda1 >= 0.0 && lambda2 >= 0.0)) fail("lambda1 and lambda2 must be non-negative");
  if (std::abs(lambda1 + lambda2 - 1.0) > 1e-9) {
    std::ostringstream s;
    s << "lambda1 + lambda2 must equal 1 (got " << lambda1 << " + " << lambda2 << ")";
    fail(s.str());
  }
  if (gamma_ramp_steps == 0) fail("gamma_ramp_steps must be >= 1");
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) fail("d_model must be a positive multiple of n_heads");
  if (scn_windows.empty() || scn_maps == 0) fail("scn_windows and scn_maps must be non-empty");
  if (batch_tokens == 0 || grad_accumulation == 0) fail("batch_tokens and grad_accumulation must be >= 1");
  if (upsample_rate == 0) fail("upsample_rate must be >= 1");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) fail("label_smoothing must lie in [0, 1)");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam betas in [0, 1)");
  if (!(lr_scale > 0.0) || warmup_steps == 0) fail("lr_scale and warmup_steps must be positive");
}

AdamConfig TrainConfig::adam() const {
  return AdamConfig{adam_beta1, adam_beta2, adam_eps, d_model, warmup_steps, lr_scale};
}

ModelConfig TrainConfig::model(std::size_t src_vocab, std::size_t tgt_vocab) const {
  return ModelConfig{src_vocab, tgt_vocab, d_model, n_heads, enc_layers, dec_layers, d_ff};
}

ScnConfig TrainConfig::scn() const { return ScnConfig{d_model, scn_windows, scn_maps, gate_bias_init}; }

#define SEMAUG_CONFIG_FIELDS(X)                                                                                    \
  X(lambda1) X(lambda2) X(gamma_ramp_start) X(gamma_ramp_steps) X(d_model) X(n_heads) X(enc_layers) X(dec_layers) \
  X(d_ff) X(scn_windows) X(scn_maps) X(gate_bias_init) X(warmup_steps) X(lr_scale) X(adam_beta1) X(adam_beta2)    \
  X(adam_eps) X(batch_tokens) X(max_steps) X(grad_accumulation) X(checkpoint_every) X(label_smoothing)            \
  X(upsample_rate) X(seed)

std::string TrainConfig::to_json() const {
  ordered_json j;
#define X(f) j[#f] = f;
  SEMAUG_CONFIG_FIELDS(X)
#undef X
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("train config: expected a JSON object");
  static const std::set<std::string> known{
#define X(f) #f,
      SEMAUG_CONFIG_FIELDS(X)
#undef X
  };
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ConfigError("train config: unknown key '" + key + "'");
  TrainConfig c;
  try {
#define X(f) \
  if (j.contains(#f)) j.at(#f).get_to(c.f);
    SEMAUG_CONFIG_FIELDS(X)
#undef X
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  if (j.contains("lambda1") && !j.contains("lambda2")) c.lambda2 = 1.0 - c.lambda1;
  c.validate();
  return c;
}

#undef SEMAUG_CONFIG_FIELDS

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream s;
  s << in.rdbuf();
  return from_json(s.str());
}

// ---- loss reports ---------------------------------------------------------

std::string LossReport::to_json() const {
  ordered_json j;
  j["step"] = step;
  j["total"] = total;
  j["mle_x"] = mle_x;
  j["mle_xbar"] = mle_xbar;
  j["sem"] = sem;
  j["gamma"] = gamma_now;
  return j.dump();
}

LossReport LossReport::from_json(const std::string& line) {
  const auto j = ordered_json::parse(line);
  LossReport r;
  r.step = j.at("step").get<std::size_t>();
  r.total = j.at("total").get<double>();
  r.mle_x = j.at("mle_x").get<double>();
  r.mle_xbar = j.at("mle_xbar").get<double>();
  r.sem = j.at("sem").get<double>();
  r.gamma_now = j.at("gamma").get<double>();
  return r;
}

// ---- objective ------------------------------------------------------------

std::size_t target_tokens(const Sentence& y) { return y.size() + 1; }

namespace {

Var add_all(const std::vector<Var>& terms) {
  Var acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

}  // namespace

Var mle_loss(Graph& g, Seq2SeqModel& model, std::span<const SentencePair> batch, double label_smoothing) {
  if (batch.empty()) throw std::invalid_argument("mle_loss: empty batch");
  std::vector<Var> terms;
  std::size_t tokens = 0;
  for (const auto& pair : batch) {
    terms.push_back(model.nll(g, model.encode(g, pair.src), pair.tgt, label_smoothing));
    tokens += target_tokens(pair.tgt);
  }
  return scale(add_all(terms), 1.0 / static_cast<double>(tokens));
}

double mle_loss(Seq2SeqModel& model, std::span<const SentencePair> batch) {
  Graph g(false);
  return mle_loss(g, model, batch).value().item();
}

double gamma_schedule(std::size_t step, const TrainConfig& cfg) {
  if (step < cfg.gamma_ramp_start) return 0.0;
  const std::size_t into = step - cfg.gamma_ramp_start;
  if (into >= cfg.gamma_ramp_steps) return 1.0;
  return static_cast<double>(into) / static_cast<double>(cfg.gamma_ramp_steps);
}

Var fused_mle(Graph& g, Seq2SeqModel& model, Scn& scn, const Sentence& x, const Sentence& y, LatentMode mode,
              Rng* rng, double label_smoothing) {
  Var H = model.encode(g, x);
  LatentVars lv = scn.latent(g, H, mode, rng);
  return scale(model.nll(g, scn.fuse(g, lv.z, H), y, label_smoothing), 1.0 / static_cast<double>(target_tokens(y)));
}

SemaugTerms semaug_terms(Graph& g, Seq2SeqModel& model, Scn& scn, std::span<const SyntheticRecord* const> batch,
                         const TrainConfig& cfg, std::size_t step, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("semaug_loss: empty batch");
  std::vector<Var> nll_x, nll_xbar, kl;
  std::size_t tokens = 0;
  for (const SyntheticRecord* r : batch) {
    if (!r->real_source) throw std::invalid_argument("semaug_loss: record without a real source");
    if (r->synthetic_sources.empty()) throw std::invalid_argument("semaug_loss: empty X(y)");
    const Sentence& x = *r->real_source;
    const Sentence& xbar = r->synthetic_sources[rng.index(r->synthetic_sources.size())];
    Var hx = model.encode(g, x);
    LatentVars lx = scn.latent(g, hx, LatentMode::stochastic, &rng);
    Var hb = model.encode(g, xbar);
    LatentVars lb = scn.latent(g, hb, LatentMode::stochastic, &rng);
    nll_x.push_back(model.nll(g, scn.fuse(g, lx.z, hx), r->target, cfg.label_smoothing));
    nll_xbar.push_back(model.nll(g, scn.fuse(g, lb.z, hb), r->target, cfg.label_smoothing));
    kl.push_back(kl_divergence(lb.mu, lb.log_var, lx.mu, lx.log_var));
    tokens += target_tokens(r->target);
  }
  const double per_token = 1.0 / static_cast<double>(tokens);
  SemaugTerms t;
  t.mle_x = scale(add_all(nll_x), per_token);
  t.mle_xbar = scale(add_all(nll_xbar), per_token);
  t.sem = scale(add_all(kl), 1.0 / static_cast<double>(batch.size()));
  t.total = add(add(scale(t.mle_x, cfg.lambda1), scale(t.mle_xbar, cfg.lambda2)),
                scale(t.sem, gamma_schedule(step, cfg)));
  return t;
}

namespace {

LossReport report_of(const SemaugTerms& t, std::size_t step, const TrainConfig& cfg) {
  return LossReport{step,
                    t.total.value().item(),
                    t.mle_x.value().item(),
                    t.mle_xbar.value().item(),
                    t.sem.value().item(),
                    gamma_schedule(step, cfg)};
}

}  // namespace

LossReport semaug_loss(Seq2SeqModel& model, Scn& scn, const SyntheticRecord& record, const TrainConfig& cfg,
                       std::size_t step, Rng& rng) {
  Graph g(false);
  const SyntheticRecord* one[] = {&record};
  return report_of(semaug_terms(g, model, scn, one, cfg, step, rng), step, cfg);
}

// ---- batching -------------------------------------------------------------

std::vector<std::size_t> epoch_order(std::size_t n_real, std::size_t n_once, std::size_t rate, Rng& rng) {
  std::vector<std::size_t> order;
  order.reserve(n_real * rate + n_once);
  for (std::size_t r = 0; r < rate; ++r)
    for (std::size_t i = 0; i < n_real; ++i) order.push_back(i);
  for (std::size_t i = 0; i < n_once; ++i) order.push_back(n_real + i);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  return order;
}

std::vector<std::vector<std::size_t>> pack_batches(std::span<const std::size_t> order,
                                                   const std::function<std::size_t(std::size_t)>& tokens,
                                                   std::size_t budget) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur;
  std::size_t used = 0;
  for (std::size_t i : order) {
    const std::size_t t = tokens(i);
    if (!cur.empty() && used + t > budget) {
      out.push_back(std::move(cur));
      cur.clear();
      used = 0;
    }
    cur.push_back(i);
    used += t;
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// ---- training loops -------------------------------------------------------

namespace {

// Drives epochs of packed batches through `micro` until max_steps optimizer steps.
// micro(batch, step) builds the loss, runs backward and returns the report.
template <typename Micro>
std::vector<LossReport> run_steps(std::vector<Parameter*> params, ParameterStore* stores[], std::size_t n_stores,
                                  std::size_t n_real, std::size_t n_once, std::size_t rate,
                                  const std::function<std::size_t(std::size_t)>& tokens, const TrainConfig& cfg,
                                  Rng& shuffle, Micro&& micro, const StepHook& hook) {
  std::vector<LossReport> log;
  if (cfg.max_steps == 0) return log;
  if (n_real + n_once == 0) throw std::invalid_argument("train: empty corpus");
  const AdamConfig adam = cfg.adam();
  AdamState state;
  std::size_t step = 1, micro_done = 0;
  LossReport acc;
  auto zero = [&] {
    for (std::size_t s = 0; s < n_stores; ++s) stores[s]->zero_grad();
  };
  zero();
  for (;;) {
    const std::vector<std::size_t> order = epoch_order(n_real, n_once, rate, shuffle);
    for (const auto& batch : pack_batches(order, tokens, cfg.batch_tokens)) {
      const LossReport r = micro(batch, step);
      const double k = static_cast<double>(cfg.grad_accumulation);
      acc.total += r.total / k;
      acc.mle_x += r.mle_x / k;
      acc.mle_xbar += r.mle_xbar / k;
      acc.sem += r.sem / k;
      if (++micro_done < cfg.grad_accumulation) continue;
      adam_step(params, state, adam, step);
      acc.step = step;
      acc.gamma_now = r.gamma_now;
      log.push_back(acc);
      if (hook) hook(acc);
      acc = LossReport{};
      micro_done = 0;
      zero();
      if (step++ == cfg.max_steps) return log;
    }
  }
}

}  // namespace

std::vector<LossReport> train_mle(Seq2SeqModel& model, const std::vector<SentencePair>& pairs, const TrainConfig& cfg,
                                  const StepHook& hook) {
  cfg.validate();
  Rng shuffle(derive_seed(cfg.seed, 0x5348));
  ParameterStore* stores[] = {&model.params()};
  const double inv_accum = 1.0 / static_cast<double>(cfg.grad_accumulation);
  auto tokens = [&](std::size_t i) { return pairs[i].src.size() + pairs[i].tgt.size(); };
  auto micro = [&](const std::vector<std::size_t>& idx, std::size_t) {
    std::vector<SentencePair> batch;
    for (std::size_t i : idx) batch.push_back(pairs[i]);
    Graph g;
    Var loss = mle_loss(g, model, batch, cfg.label_smoothing);
    g.backward(scale(loss, inv_accum));
    const double v = loss.value().item();
    return LossReport{0, v, v, 0.0, 0.0, 0.0};
  };
  return run_steps(model.params().all(), stores, 1, pairs.size(), 0, 1, tokens, cfg, shuffle, micro, hook);
}

std::vector<LossReport> train_semaug(Seq2SeqModel& model, Scn& scn, const std::vector<SyntheticRecord>& real,
                                     const std::vector<SyntheticRecord>& monolingual, const TrainConfig& cfg,
                                     const StepHook& hook) {
  cfg.validate();
  if (scn.config().d_model != model.config().d_model) throw ConfigError("semaug: SCN and model d_model differ");
  Rng shuffle(derive_seed(cfg.seed, 0x5345));
  Rng noise(derive_seed(cfg.seed, 0x4e5a));
  std::vector<const SyntheticRecord*> all;
  for (const auto& r : real) all.push_back(&r);
  for (const auto& r : monolingual) all.push_back(&r);
  std::vector<Parameter*> params = model.params().all();
  for (Parameter* p : scn.params().all()) params.push_back(p);
  ParameterStore* stores[] = {&model.params(), &scn.params()};
  const double inv_accum = 1.0 / static_cast<double>(cfg.grad_accumulation);
  auto tokens = [&](std::size_t i) {
    const auto* r = all[i];
    return (r->real_source ? r->real_source->size() : 0) + r->target.size();
  };
  auto micro = [&](const std::vector<std::size_t>& idx, std::size_t step) {
    std::vector<const SyntheticRecord*> batch;
    for (std::size_t i : idx) batch.push_back(all[i]);
    Graph g;
    SemaugTerms t = semaug_terms(g, model, scn, batch, cfg, step, noise);
    g.backward(scale(t.total, inv_accum));
    return report_of(t, step, cfg);
  };
  return run_steps(params, stores, 2, real.size(), monolingual.size(), cfg.upsample_rate, tokens, cfg, shuffle,
                   micro, hook);
}

// ---- phases ---------------------------------------------------------------

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::pretrain_forward:
      return "pretrain_forward";
    case Phase::pretrain_reverse:
      return "pretrain_reverse";
    case Phase::semaug:
      return "semaug";
  }
  return "?";
}

PhaseResult run_phase(const PhaseJob& job, const TrainConfig& cfg) {
  cfg.validate();
  const std::string name = phase_name(job.phase);
  std::filesystem::create_directories(job.out_dir);
  PhaseResult result;
  std::optional<Seq2SeqModel> model;
  std::optional<Scn> scn;

  if (job.phase == Phase::semaug) {
    if (!job.init_checkpoint || !std::filesystem::exists(*job.init_checkpoint)) {
      throw PrerequisiteError("semaug phase needs the pretrain_forward checkpoint" +
                              (job.init_checkpoint ? " at " + job.init_checkpoint->string() : std::string()));
    }
    if (job.records.empty() && job.monolingual.empty()) {
      throw PrerequisiteError("semaug phase needs a synthetic corpus (run synthesize first)");
    }
    const NamedTensors init = load_checkpoint(*job.init_checkpoint);
    model.emplace(Seq2SeqModel::from_state(init));
    const bool has_scn = std::any_of(init.begin(), init.end(), [](const auto& t) { return t.first == "meta.scn"; });
    if (has_scn) {
      scn.emplace(Scn::from_state(init));
    } else {
      scn.emplace(cfg.scn(), derive_seed(cfg.seed, 0x53434e));
    }
  } else {
    if (job.pairs.empty()) throw PrerequisiteError(name + " phase needs a non-empty parallel corpus");
    const bool reverse = job.phase == Phase::pretrain_reverse;
    model.emplace(reverse ? cfg.model(job.tgt_vocab, job.src_vocab) : cfg.model(job.src_vocab, job.tgt_vocab),
                  derive_seed(cfg.seed, reverse ? 2 : 1));
  }

  auto save = [&](const std::filesystem::path& path) {
    NamedTensors state = model->state();
    if (scn) {
      for (auto& t : scn->state()) state.push_back(std::move(t));
    }
    save_checkpoint(path, state);
    result.checkpoints.push_back(path);
  };
  auto hook = [&](const LossReport& r) {
    if (cfg.checkpoint_every && r.step % cfg.checkpoint_every == 0 && r.step != cfg.max_steps) {
      save(job.out_dir / (name + ".step" + std::to_string(r.step) + ".ckpt"));
    }
  };
  if (job.phase == Phase::semaug) {
    result.log = train_semaug(*model, *scn, job.records, job.monolingual, cfg, hook);
  } else {
    result.log = train_mle(*model, job.phase == Phase::pretrain_reverse ? reversed(job.pairs) : job.pairs, cfg, hook);
  }
  save(job.out_dir / (name + ".ckpt"));

  result.loss_log = job.out_dir / (name + ".losses.jsonl");
  std::ofstream out(result.loss_log, std::ios::binary);
  for (const auto& r : result.log) out << r.to_json() << '\n';
  if (!out) throw std::runtime_error("cannot write " + result.loss_log.string());
  return result;
}

}  // namespace semaug
