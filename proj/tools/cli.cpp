#include "cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "semaug/checkpoint.hpp"
#include "semaug/corpus.hpp"
#include "semaug/decode.hpp"
#include "semaug/metrics.hpp"
#include "semaug/pipeline.hpp"
#include "semaug/sampler.hpp"
#include "semaug/scn.hpp"
#include "semaug/trainer.hpp"

namespace semaug {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

struct Common {
  std::string work = "work";
  std::string config;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--work", c.work, "Working directory (manifest, vocabularies, checkpoints)")->capture_default_str();
  sub->add_option("--config", c.config, "JSON training config");
  sub->add_option("--seed", c.seed, "Global seed (falls back to $SEMAUG_SEED, then the config)");
  sub->add_flag("--force", c.force, "Rerun even when the manifest says the outputs are current");
}

std::uint64_t resolve_seed(const Common& c, std::uint64_t fallback) {
  if (c.seed) return *c.seed;
  if (const char* env = std::getenv("SEMAUG_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("SEMAUG_SEED is not an unsigned integer: ") + env);
  }
  return fallback;
}

TrainConfig load_config(const Common& c) {
  if (!c.config.empty() && !fs::exists(c.config)) throw PrerequisiteError("config file not found: " + c.config);
  TrainConfig cfg = c.config.empty() ? TrainConfig{} : TrainConfig::load(c.config);
  cfg.seed = resolve_seed(c, cfg.seed);
  return cfg;
}

void require_file(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) throw PrerequisiteError("missing " + p.string() + (hint.empty() ? "" : " (" + hint + ")"));
}

fs::path work_path(const Common& c, const std::string& name) { return fs::path(c.work) / name; }

// Wraps one command in a manifest entry.
class Run {
 public:
  Run(const Common& c, std::string command, const ordered_json& settings, std::uint64_t seed,
      const std::vector<fs::path>& inputs)
      : manifest_path_(work_path(c, "manifest.json")), force_(c.force) {
    manifest_ = Manifest::load(manifest_path_);
    entry_.command = std::move(command);
    entry_.config_hash = sha1_hex(settings.dump());
    entry_.seed = seed;
    for (const auto& p : inputs) {
      require_file(p, "");
      entry_.inputs[p.string()] = file_hash(p);
    }
  }

  bool skip() const {
    if (force_ || !manifest_.up_to_date(entry_)) return false;
    std::cout << entry_.command << ": inputs and config unchanged, outputs present; nothing to do (use --force)\n";
    return true;
  }

  void finish(const std::vector<fs::path>& outputs, std::optional<std::size_t> upsample_rate = std::nullopt) {
    for (const auto& p : outputs) entry_.outputs.push_back(p.string());
    entry_.completed = true;
    manifest_.record(entry_);
    if (upsample_rate) manifest_.upsample_rate = *upsample_rate;
    manifest_.save(manifest_path_);
  }

 private:
  fs::path manifest_path_;
  bool force_;
  Manifest manifest_;
  ManifestEntry entry_;
};

std::pair<Vocab, Vocab> load_vocabs(const Common& c) {
  const fs::path s = work_path(c, "src.vocab"), t = work_path(c, "tgt.vocab");
  require_file(s, "run train-forward or train-reverse first");
  require_file(t, "run train-forward or train-reverse first");
  return {Vocab::load(s), Vocab::load(t)};
}

bool has_scn(const NamedTensors& state) {
  for (const auto& t : state)
    if (t.first == "meta.scn") return true;
  return false;
}

// ---- make-toy -------------------------------------------------------------

struct ToyOpts {
  std::string kind = "paraphrase";
  std::string out;
};

int cmd_make_toy(const Common& c, const ToyOpts& o) {
  const ToyKind kind = parse_toy_kind(o.kind);
  const std::uint64_t seed = resolve_seed(c, 1);
  const fs::path out = o.out.empty() ? work_path(c, "data") : fs::path(o.out);
  Run run(c, "make-toy", ordered_json{{"kind", o.kind}, {"out", out.string()}}, seed, {});
  if (run.skip()) return 0;
  const ToyData data = make_toy(kind, seed);
  const auto files = write_toy(data, out);
  std::cout << "wrote " << toy_kind_name(kind) << " toy corpus to " << out.string() << ": " << data.train.src.size()
            << " train, " << data.test.src.size() << " test, " << data.mono.size() << " monolingual\n";
  run.finish(files);
  return 0;
}

// ---- pretraining ----------------------------------------------------------

struct PretrainOpts {
  std::string src, tgt;
  std::size_t vocab_size = 8000;
  std::size_t max_len = 100;
  std::optional<std::size_t> max_steps;
};

int cmd_pretrain(const Common& c, const PretrainOpts& o, Phase phase) {
  TrainConfig cfg = load_config(c);
  if (o.max_steps) cfg.max_steps = *o.max_steps;
  cfg.validate();
  const std::string command = phase == Phase::pretrain_forward ? "train-forward" : "train-reverse";
  Run run(c, command,
          ordered_json{{"config", ordered_json::parse(cfg.to_json())},
                       {"vocab_size", o.vocab_size},
                       {"max_len", o.max_len}},
          cfg.seed, {o.src, o.tgt});
  if (run.skip()) return 0;

  const TextCorpus corpus = load_parallel(o.src, o.tgt, o.max_len);
  if (corpus.dropped) std::cout << "dropped " << corpus.dropped << " pairs (empty or longer than " << o.max_len << ")\n";
  fs::create_directories(c.work);
  const fs::path sv = work_path(c, "src.vocab"), tv = work_path(c, "tgt.vocab");
  if (!fs::exists(sv) || !fs::exists(tv)) {
    build_vocab(corpus.src, o.vocab_size).save(sv);
    build_vocab(corpus.tgt, o.vocab_size).save(tv);
  }
  const Vocab src_vocab = Vocab::load(sv), tgt_vocab = Vocab::load(tv);

  PhaseJob job;
  job.phase = phase;
  job.pairs = encode_pairs(corpus, src_vocab, tgt_vocab);
  job.src_vocab = src_vocab.size();
  job.tgt_vocab = tgt_vocab.size();
  job.out_dir = c.work;
  const PhaseResult res = run_phase(job, cfg);
  std::printf("%s: %zu pairs, %zu steps, final loss %.6f\n", phase_name(phase), job.pairs.size(), res.log.size(),
              res.log.empty() ? 0.0 : res.log.back().total);
  std::vector<fs::path> outputs = res.checkpoints;
  outputs.push_back(res.loss_log);
  outputs.push_back(sv);
  outputs.push_back(tv);
  run.finish(outputs);
  return 0;
}

// ---- synthesize -----------------------------------------------------------

struct SynthOpts {
  std::string src, tgt, mono;
  std::string out, mono_out;
  double hbar = 2.5;
  std::size_t n_samples = 3;
  std::size_t max_len = 64;
  bool bits = false;
};

int cmd_synthesize(const Common& c, const SynthOpts& o) {
  if (o.src.empty() != o.tgt.empty()) throw PrerequisiteError("--src and --tgt must be given together");
  if (o.src.empty() && o.mono.empty()) throw PrerequisiteError("nothing to synthesize: give --src/--tgt and/or --mono");
  const TrainConfig cfg = load_config(c);
  SamplerConfig sc;
  sc.hbar = o.hbar;
  sc.n_samples = o.n_samples;
  sc.max_len = o.max_len;
  sc.seed = cfg.seed;
  sc.base = o.bits ? EntropyBase::bits : EntropyBase::natural;
  sc.validate();

  const fs::path ckpt = work_path(c, "pretrain_reverse.ckpt");
  std::vector<fs::path> inputs{ckpt, work_path(c, "src.vocab"), work_path(c, "tgt.vocab")};
  if (!o.src.empty()) {
    inputs.emplace_back(o.src);
    inputs.emplace_back(o.tgt);
  }
  if (!o.mono.empty()) inputs.emplace_back(o.mono);
  const fs::path out = o.out.empty() ? work_path(c, "synthetic.jsonl") : fs::path(o.out);
  const fs::path mono_out = o.mono_out.empty() ? work_path(c, "mono.jsonl") : fs::path(o.mono_out);
  require_file(ckpt, "run train-reverse first");
  Run run(c, "synthesize",
          ordered_json{{"hbar", o.hbar},
                       {"num_samples", o.n_samples},
                       {"max_len", o.max_len},
                       {"bits", o.bits},
                       {"out", out.string()},
                       {"mono_out", mono_out.string()}},
          sc.seed, inputs);
  if (run.skip()) return 0;

  const auto [src_vocab, tgt_vocab] = load_vocabs(c);
  Seq2SeqModel reverse = Seq2SeqModel::from_state(load_checkpoint(ckpt));
  std::vector<fs::path> outputs;
  if (!o.src.empty()) {
    const TextCorpus corpus = load_parallel(o.src, o.tgt);
    const auto pairs = encode_pairs(corpus, src_vocab, tgt_vocab);
    std::vector<Sentence> targets, reals;
    for (const auto& p : pairs) {
      targets.push_back(p.tgt);
      reals.push_back(p.src);
    }
    const auto records = synthesize_corpus(reverse, targets, reals, sc);
    save_synthetic(out, records, src_vocab, tgt_vocab);
    std::size_t truncated = 0;
    for (const auto& r : records)
      for (bool t : r.truncated) truncated += t;
    std::printf("synthesized %zu x %zu sources (hbar %g, %zu truncated) -> %s\n", records.size(), sc.n_samples,
                sc.hbar, truncated, out.string().c_str());
    outputs.push_back(out);
  }
  if (!o.mono.empty()) {
    std::vector<Sentence> targets;
    for (const auto& words : read_lines(o.mono))
      if (!words.empty()) targets.push_back(tgt_vocab.encode(words));
    SamplerConfig mc = sc;
    mc.seed = derive_seed(sc.seed, 0x4d4f4e4f);
    const auto records = augment_monolingual(reverse, targets, mc);
    save_synthetic(mono_out, records, src_vocab, tgt_vocab);
    std::printf("back-translated %zu monolingual targets -> %s\n", records.size(), mono_out.string().c_str());
    outputs.push_back(mono_out);
  }
  run.finish(outputs);
  return 0;
}

// ---- train-semaug ---------------------------------------------------------

struct SemaugOpts {
  std::optional<double> lambda1;
  std::optional<std::size_t> gamma_ramp_steps;
  std::optional<std::size_t> max_steps;
  std::optional<std::size_t> upsample_rate;
  std::string synthetic, mono;
};

int cmd_train_semaug(const Common& c, const SemaugOpts& o) {
  TrainConfig cfg = load_config(c);
  if (o.lambda1) {
    cfg.lambda1 = *o.lambda1;
    cfg.lambda2 = 1.0 - *o.lambda1;
  }
  if (o.gamma_ramp_steps) cfg.gamma_ramp_steps = *o.gamma_ramp_steps;
  if (o.max_steps) cfg.max_steps = *o.max_steps;
  if (o.upsample_rate) cfg.upsample_rate = *o.upsample_rate;
  cfg.validate();
  std::printf("lambda1 = %g, lambda2 = %g%s\n", cfg.lambda1, cfg.lambda2, o.lambda1 ? " (derived)" : "");

  const fs::path init = work_path(c, "pretrain_forward.ckpt");
  const fs::path syn = o.synthetic.empty() ? work_path(c, "synthetic.jsonl") : fs::path(o.synthetic);
  const fs::path mono = o.mono.empty() ? work_path(c, "mono.jsonl") : fs::path(o.mono);
  require_file(init, "run train-forward first");
  require_file(syn, "run synthesize first");
  if (!o.mono.empty()) require_file(mono, "run synthesize --mono first");
  std::vector<fs::path> inputs{init, syn, work_path(c, "src.vocab"), work_path(c, "tgt.vocab")};
  const bool use_mono = fs::exists(mono);
  if (use_mono) inputs.push_back(mono);
  Run run(c, "train-semaug", ordered_json{{"config", ordered_json::parse(cfg.to_json())}}, cfg.seed, inputs);
  if (run.skip()) return 0;

  const auto [src_vocab, tgt_vocab] = load_vocabs(c);
  PhaseJob job;
  job.phase = Phase::semaug;
  job.records = load_synthetic(syn, src_vocab, tgt_vocab);
  if (use_mono) job.monolingual = load_synthetic(mono, src_vocab, tgt_vocab);
  job.src_vocab = src_vocab.size();
  job.tgt_vocab = tgt_vocab.size();
  job.init_checkpoint = init;
  job.out_dir = c.work;
  const PhaseResult res = run_phase(job, cfg);
  const LossReport& last = res.log.back();
  std::printf("semaug: %zu real + %zu monolingual records (upsample %zu), %zu steps, final total %.6f sem %.6f\n",
              job.records.size(), job.monolingual.size(), cfg.upsample_rate, res.log.size(), last.total, last.sem);
  std::vector<fs::path> outputs = res.checkpoints;
  outputs.push_back(res.loss_log);
  run.finish(outputs, cfg.upsample_rate);
  return 0;
}

// ---- translate ------------------------------------------------------------

struct TranslateOpts {
  std::string input, output, checkpoint;
  std::size_t beam = 4;
  double length_penalty = 0.6;
  std::size_t max_len = 100;
};

fs::path default_model(const Common& c) {
  const fs::path s = work_path(c, "semaug.ckpt");
  return fs::exists(s) ? s : work_path(c, "pretrain_forward.ckpt");
}

int cmd_translate(const Common& c, const TranslateOpts& o) {
  const fs::path ckpt = o.checkpoint.empty() ? default_model(c) : fs::path(o.checkpoint);
  require_file(ckpt, "run train-forward or train-semaug first");
  const fs::path out = o.output.empty() ? work_path(c, "translations.txt") : fs::path(o.output);
  Run run(c, "translate",
          ordered_json{{"beam", o.beam}, {"length_penalty", o.length_penalty}, {"max_len", o.max_len},
                       {"out", out.string()}},
          0, {o.input, ckpt, work_path(c, "src.vocab"), work_path(c, "tgt.vocab")});
  if (run.skip()) return 0;
  const auto [src_vocab, tgt_vocab] = load_vocabs(c);
  const NamedTensors state = load_checkpoint(ckpt);
  Seq2SeqModel model = Seq2SeqModel::from_state(state);
  std::optional<Scn> scn;
  if (has_scn(state)) scn.emplace(Scn::from_state(state));

  std::vector<std::vector<std::string>> lines;
  for (const auto& words : read_lines(o.input)) {
    if (words.empty()) {
      lines.emplace_back();
      continue;
    }
    const Sentence x = src_vocab.encode(words);
    const HiddenStates memory = scn ? fused_memory(model, *scn, x) : encode_memory(model, x);
    lines.push_back(tgt_vocab.decode(beam_decode(model, memory, o.beam, o.length_penalty, o.max_len).sentence()));
  }
  write_lines(out, lines);
  std::printf("translated %zu lines with %s -> %s\n", lines.size(), ckpt.string().c_str(), out.string().c_str());
  run.finish({out});
  return 0;
}

// ---- metrics --------------------------------------------------------------

struct BleuOpts {
  std::string hyp, ref;
};

int cmd_eval_bleu(const Common& c, const BleuOpts& o) {
  Run run(c, "eval-bleu", ordered_json::object(), 0, {o.hyp, o.ref});
  const auto hyps = read_lines(o.hyp), refs = read_lines(o.ref);
  std::printf("BLEU = %.2f (%zu sentences)\n", corpus_bleu(hyps, refs), hyps.size());
  run.finish({});
  return 0;
}

struct DiversityOpts {
  std::vector<std::string> synthetic;
  std::vector<double> hbar;
  std::string out;
};

int cmd_analyze_diversity(const Common& c, const DiversityOpts& o) {
  if (o.hbar.size() != o.synthetic.size()) {
    throw PrerequisiteError("give one --hbar value per --synthetic file (" + std::to_string(o.synthetic.size()) +
                            " files, " + std::to_string(o.hbar.size()) + " values)");
  }
  std::vector<fs::path> inputs(o.synthetic.begin(), o.synthetic.end());
  inputs.push_back(work_path(c, "src.vocab"));
  inputs.push_back(work_path(c, "tgt.vocab"));
  Run run(c, "analyze-diversity", ordered_json{{"hbar", o.hbar}, {"out", o.out}}, 0, inputs);
  const auto [src_vocab, tgt_vocab] = load_vocabs(c);
  std::vector<DiversityReport> reports;
  for (std::size_t i = 0; i < o.synthetic.size(); ++i) {
    reports.push_back(diversity_report(load_synthetic(o.synthetic[i], src_vocab, tgt_vocab), o.hbar[i]));
  }
  std::cout << diversity_table(reports);
  std::vector<fs::path> outputs;
  if (!o.out.empty()) {
    std::ofstream f(o.out, std::ios::binary);
    for (const auto& r : reports) f << r.to_json() << '\n';
    if (!f) throw std::runtime_error("cannot write " + o.out);
    outputs.emplace_back(o.out);
  }
  run.finish(outputs);
  return 0;
}

struct LatentOpts {
  std::string src, tgt, out, checkpoint;
};

int cmd_export_latents(const Common& c, const LatentOpts& o) {
  const fs::path ckpt = o.checkpoint.empty() ? work_path(c, "semaug.ckpt") : fs::path(o.checkpoint);
  require_file(ckpt, "run train-semaug first");
  const fs::path out = o.out.empty() ? work_path(c, "latents.csv") : fs::path(o.out);
  Run run(c, "export-latents", ordered_json{{"out", out.string()}}, 0,
          {o.src, o.tgt, ckpt, work_path(c, "src.vocab"), work_path(c, "tgt.vocab")});
  if (run.skip()) return 0;
  const auto [src_vocab, tgt_vocab] = load_vocabs(c);
  const NamedTensors state = load_checkpoint(ckpt);
  if (!has_scn(state)) throw PrerequisiteError(ckpt.string() + " has no semantic network; run train-semaug first");
  Seq2SeqModel model = Seq2SeqModel::from_state(state);
  Scn scn = Scn::from_state(state);

  const TextCorpus corpus = load_parallel(o.src, o.tgt);
  std::map<std::vector<std::string>, std::size_t> group_of;
  std::vector<std::size_t> ids;
  std::vector<std::vector<double>> vectors;
  std::vector<std::vector<std::vector<double>>> groups;
  for (std::size_t i = 0; i < corpus.src.size(); ++i) {
    const std::size_t g = group_of.emplace(corpus.tgt[i], group_of.size()).first->second;
    const SemanticState s = infer_semantics(model, scn, src_vocab.encode(corpus.src[i]), LatentMode::deterministic,
                                            nullptr);
    std::vector<double> mu(s.mu.data().begin(), s.mu.data().end());
    if (groups.size() <= g) groups.resize(g + 1);
    groups[g].push_back(mu);
    ids.push_back(g);
    vectors.push_back(std::move(mu));
  }
  write_latents_csv(out, ids, vectors);
  std::printf("exported %zu latent means in %zu groups -> %s\n", vectors.size(), groups.size(), out.string().c_str());
  bool separable = groups.size() >= 2;
  for (const auto& g : groups) separable = separable && g.size() >= 2;
  if (separable) {
    const Separation sep = cluster_separation(groups);
    std::printf("intra_mean %.6f inter_mean %.6f ratio %.4f\n", sep.intra_mean, sep.inter_mean,
                sep.intra_mean / sep.inter_mean);
  }
  run.finish({out});
  return 0;
}

struct PcaOpts {
  std::string input, out;
  std::size_t k = 2;
};

int cmd_pca(const Common& c, const PcaOpts& o) {
  const fs::path out = o.out.empty() ? work_path(c, "pca.csv") : fs::path(o.out);
  Run run(c, "pca", ordered_json{{"k", o.k}, {"out", out.string()}}, 0, {o.input});
  if (run.skip()) return 0;
  std::vector<std::size_t> ids;
  std::vector<std::vector<double>> vectors;
  read_latents_csv(o.input, ids, vectors);
  const PcaResult res = pca_project(vectors, o.k);
  write_latents_csv(out, ids, res.coords);
  std::printf("projected %zu vectors to %zu dimensions -> %s (eigenvalues", vectors.size(), o.k, out.string().c_str());
  for (double e : res.eigenvalues) std::printf(" %.6g", e);
  std::printf(")\n");
  run.finish({out});
  return 0;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Semantic augmentation pipeline for toy translation corpora", "semaug"};
  app.require_subcommand(1);

  Common common;
  ToyOpts toy;
  PretrainOpts fwd, rev;
  SynthOpts synth;
  SemaugOpts sem;
  TranslateOpts tr;
  BleuOpts bleu;
  DiversityOpts div;
  LatentOpts lat;
  PcaOpts pca;

  auto* make_toy_cmd = app.add_subcommand("make-toy", "Write a generated toy corpus");
  add_common(make_toy_cmd, common);
  make_toy_cmd->add_option("--kind", toy.kind, "paraphrase, clusters or copy")->capture_default_str();
  make_toy_cmd->add_option("--out", toy.out, "Output directory (default <work>/data)");

  auto pretrain = [&](const char* name, const char* help, PretrainOpts& o) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub, common);
    sub->add_option("--src", o.src, "Source side, one sentence per line")->required();
    sub->add_option("--tgt", o.tgt, "Target side, line-aligned")->required();
    sub->add_option("--vocab-size", o.vocab_size, "Vocabulary size including 4 reserved ids")->capture_default_str();
    sub->add_option("--max-len", o.max_len, "Drop pairs with a longer side")->capture_default_str();
    sub->add_option("--max-steps", o.max_steps, "Override the config's max_steps");
    return sub;
  };
  auto* fwd_cmd = pretrain("train-forward", "MLE pretraining of the source-to-target model", fwd);
  auto* rev_cmd = pretrain("train-reverse", "MLE pretraining of the target-to-source model", rev);

  auto* synth_cmd = app.add_subcommand("synthesize", "Sample synthetic sources with the reverse model");
  add_common(synth_cmd, common);
  synth_cmd->add_option("--src", synth.src, "Real sources");
  synth_cmd->add_option("--tgt", synth.tgt, "Targets aligned with --src");
  synth_cmd->add_option("--mono", synth.mono, "Monolingual targets to back-translate");
  synth_cmd->add_option("--hbar", synth.hbar, "Entropy threshold for sampling")->capture_default_str();
  synth_cmd->add_option("--num-samples", synth.n_samples, "Synthetic sources per target")->capture_default_str();
  synth_cmd->add_option("--max-len", synth.max_len, "Maximum sampled length")->capture_default_str();
  synth_cmd->add_flag("--bits", synth.bits, "Measure entropy in bits instead of nats");
  synth_cmd->add_option("--out", synth.out, "Synthetic JSONL (default <work>/synthetic.jsonl)");
  synth_cmd->add_option("--mono-out", synth.mono_out, "Back-translated JSONL (default <work>/mono.jsonl)");

  auto* sem_cmd = app.add_subcommand("train-semaug", "Joint training with synthetic sources and the SCN");
  add_common(sem_cmd, common);
  sem_cmd->add_option("--lambda1", sem.lambda1, "Weight of the real-source term; lambda2 = 1 - lambda1");
  sem_cmd->add_option("--gamma-ramp-steps", sem.gamma_ramp_steps, "Steps to ramp the KL weight from 0 to 1");
  sem_cmd->add_option("--max-steps", sem.max_steps, "Override the config's max_steps");
  sem_cmd->add_option("--upsample-rate", sem.upsample_rate, "Copies of each real pair per epoch");
  sem_cmd->add_option("--synthetic", sem.synthetic, "Synthetic JSONL (default <work>/synthetic.jsonl)");
  sem_cmd->add_option("--mono", sem.mono, "Back-translated JSONL (default <work>/mono.jsonl when present)");

  auto* tr_cmd = app.add_subcommand("translate", "Beam-decode a source file");
  add_common(tr_cmd, common);
  tr_cmd->add_option("--input", tr.input, "Source sentences")->required();
  tr_cmd->add_option("--output", tr.output, "Output file (default <work>/translations.txt)");
  tr_cmd->add_option("--checkpoint", tr.checkpoint, "Model (default semaug.ckpt, else pretrain_forward.ckpt)");
  tr_cmd->add_option("--beam", tr.beam, "Beam size")->capture_default_str();
  tr_cmd->add_option("--length-penalty", tr.length_penalty, "Length penalty exponent")->capture_default_str();
  tr_cmd->add_option("--max-len", tr.max_len, "Maximum output length")->capture_default_str();

  auto* bleu_cmd = app.add_subcommand("eval-bleu", "Corpus BLEU of a hypothesis file");
  add_common(bleu_cmd, common);
  bleu_cmd->add_option("--hyp", bleu.hyp, "Hypotheses")->required();
  bleu_cmd->add_option("--ref", bleu.ref, "References")->required();

  auto* div_cmd = app.add_subcommand("analyze-diversity", "Edit-distance and BLEU statistics of synthetic corpora");
  add_common(div_cmd, common);
  div_cmd->add_option("--synthetic", div.synthetic, "Synthetic JSONL files")->required();
  div_cmd->add_option("--hbar", div.hbar, "Threshold used for each file")->required();
  div_cmd->add_option("--out", div.out, "Write one JSON report per line");

  auto* lat_cmd = app.add_subcommand("export-latents", "Write SCN latent means, grouped by target sentence");
  add_common(lat_cmd, common);
  lat_cmd->add_option("--src", lat.src, "Source sentences")->required();
  lat_cmd->add_option("--tgt", lat.tgt, "Targets; identical lines form a group")->required();
  lat_cmd->add_option("--out", lat.out, "CSV (default <work>/latents.csv)");
  lat_cmd->add_option("--checkpoint", lat.checkpoint, "Model with SCN (default <work>/semaug.ckpt)");

  auto* pca_cmd = app.add_subcommand("pca", "Project exported latents onto principal components");
  add_common(pca_cmd, common);
  pca_cmd->add_option("--input", pca.input, "Latent CSV")->required();
  pca_cmd->add_option("--out", pca.out, "CSV (default <work>/pca.csv)");
  pca_cmd->add_option("--k", pca.k, "Number of components")->capture_default_str();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    CLI::App* shown = &app;
    for (auto* sub : app.get_subcommands()) shown = sub;
    std::cerr << shown->help();
    return 2;
  }

  try {
    if (make_toy_cmd->parsed()) return cmd_make_toy(common, toy);
    if (fwd_cmd->parsed()) return cmd_pretrain(common, fwd, Phase::pretrain_forward);
    if (rev_cmd->parsed()) return cmd_pretrain(common, rev, Phase::pretrain_reverse);
    if (synth_cmd->parsed()) return cmd_synthesize(common, synth);
    if (sem_cmd->parsed()) return cmd_train_semaug(common, sem);
    if (tr_cmd->parsed()) return cmd_translate(common, tr);
    if (bleu_cmd->parsed()) return cmd_eval_bleu(common, bleu);
    if (div_cmd->parsed()) return cmd_analyze_diversity(common, div);
    if (lat_cmd->parsed()) return cmd_export_latents(common, lat);
    if (pca_cmd->parsed()) return cmd_pca(common, pca);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace semaug
