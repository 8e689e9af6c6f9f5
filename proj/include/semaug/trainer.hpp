#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "semaug/corpus.hpp"
#include "semaug/optimizer.hpp"
#include "semaug/sampler.hpp"
#include "semaug/scn.hpp"
#include "semaug/seq2seq.hpp"

namespace semaug {

struct TrainConfig {
  double lambda1 = 0.5;
  double lambda2 = 0.5;
  std::size_t gamma_ramp_start = 0;
  std::size_t gamma_ramp_steps = 1000;

  // model and SCN sizes
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 2;
  std::size_t d_ff = 128;
  std::vector<std::size_t> scn_windows{2, 3, 4, 5};
  std::size_t scn_maps = 32;
  double gate_bias_init = -2.0;

  // optimizer
  std::size_t warmup_steps = 8000;
  double lr_scale = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.998;
  double adam_eps = 1e-9;

  std::size_t batch_tokens = 1024;
  std::size_t max_steps = 2000;
  std::size_t grad_accumulation = 1;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  double label_smoothing = 0.1;
  std::size_t upsample_rate = 1;
  std::uint64_t seed = 1;

  /// Throws ConfigError on violated bounds, including lambda1 + lambda2 != 1.
  void validate() const;
  AdamConfig adam() const;
  ModelConfig model(std::size_t src_vocab, std::size_t tgt_vocab) const;
  ScnConfig scn() const;

  std::string to_json() const;
  /// Missing keys keep their defaults; unknown keys are errors. When only
  /// lambda1 is given, lambda2 = 1 - lambda1.
  static TrainConfig from_json(const std::string& text);
  static TrainConfig load(const std::filesystem::path& path);
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a phase is started without the artifacts it builds on.
class PrerequisiteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossReport {
  std::size_t step = 0;
  double total = 0.0;
  double mle_x = 0.0;
  double mle_xbar = 0.0;
  double sem = 0.0;
  double gamma_now = 0.0;

  std::string to_json() const;
  static LossReport from_json(const std::string& line);
  friend bool operator==(const LossReport&, const LossReport&) = default;
};

/// Target tokens scored per pair: |y| plus the closing EOS.
std::size_t target_tokens(const Sentence& y);

/// Summed NLL over the batch divided by its target token count.
Var mle_loss(Graph& g, Seq2SeqModel& model, std::span<const SentencePair> batch, double label_smoothing = 0.0);
double mle_loss(Seq2SeqModel& model, std::span<const SentencePair> batch);

/// 0 before the ramp, linear across gamma_ramp_steps, then exactly 1.
double gamma_schedule(std::size_t step, const TrainConfig& cfg);

/// Token-normalized -log P(y | fuse(z, H_x)) with z from the SCN latent path.
Var fused_mle(Graph& g, Seq2SeqModel& model, Scn& scn, const Sentence& x, const Sentence& y, LatentMode mode,
              Rng* rng, double label_smoothing = 0.0);

struct SemaugTerms {
  Var total, mle_x, mle_xbar, sem;
};

/// Batched objective over records with a real source. Per record the rng
/// draws the x_bar index, then the noise for z, then for z_bar. The MLE terms
/// are normalized by the batch's target tokens, sem is the mean KL.
SemaugTerms semaug_terms(Graph& g, Seq2SeqModel& model, Scn& scn, std::span<const SyntheticRecord* const> batch,
                         const TrainConfig& cfg, std::size_t step, Rng& rng);

/// Single-record objective value (no parameter update).
LossReport semaug_loss(Seq2SeqModel& model, Scn& scn, const SyntheticRecord& record, const TrainConfig& cfg,
                       std::size_t step, Rng& rng);

/// Each of the n_real indices `rate` times and each of the n_once indices
/// (offset by n_real) once, shuffled.
std::vector<std::size_t> epoch_order(std::size_t n_real, std::size_t n_once, std::size_t rate, Rng& rng);

/// Consecutive groups of the order whose token counts stay within budget (at least one item each).
std::vector<std::vector<std::size_t>> pack_batches(std::span<const std::size_t> order,
                                                   const std::function<std::size_t(std::size_t)>& tokens,
                                                   std::size_t budget);

/// Called after every optimizer step.
using StepHook = std::function<void(const LossReport&)>;

std::vector<LossReport> train_mle(Seq2SeqModel& model, const std::vector<SentencePair>& pairs, const TrainConfig& cfg,
                                  const StepHook& hook = {});

/// Real records are upsampled by cfg.upsample_rate, monolingual ones used once per epoch.
std::vector<LossReport> train_semaug(Seq2SeqModel& model, Scn& scn, const std::vector<SyntheticRecord>& real,
                                     const std::vector<SyntheticRecord>& monolingual, const TrainConfig& cfg,
                                     const StepHook& hook = {});

enum class Phase { pretrain_forward, pretrain_reverse, semaug };
const char* phase_name(Phase p);

struct PhaseJob {
  Phase phase = Phase::pretrain_forward;
  std::vector<SentencePair> pairs;  // forward direction; reversed internally for pretrain_reverse
  std::vector<SyntheticRecord> records;
  std::vector<SyntheticRecord> monolingual;
  std::size_t src_vocab = 0, tgt_vocab = 0;
  std::optional<std::filesystem::path> init_checkpoint;  // required for semaug
  std::filesystem::path out_dir;
};

struct PhaseResult {
  std::vector<LossReport> log;
  std::vector<std::filesystem::path> checkpoints;  // intermediate ones, then <phase>.ckpt
  std::filesystem::path loss_log;
};

/// Runs one phase, writing <phase>.stepN.ckpt every checkpoint_every steps,
/// <phase>.ckpt at the end and <phase>.losses.jsonl.
PhaseResult run_phase(const PhaseJob& job, const TrainConfig& cfg);

}  // namespace semaug
