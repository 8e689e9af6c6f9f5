#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "semaug/checkpoint.hpp"
#include "semaug/graph.hpp"
#include "semaug/rng.hpp"
#include "semaug/seq2seq.hpp"

namespace semaug {

struct ScnConfig {
  std::size_t d_model = 64;  // also the latent size
  std::vector<std::size_t> windows{2, 3, 4, 5};
  std::size_t n_maps = 32;
  /// Initial value of the fusion gate bias; negative keeps fused memory near H.
  double gate_bias_init = -2.0;

  std::size_t pooled_size() const noexcept { return windows.size() * n_maps; }
  std::size_t max_window() const noexcept;
  friend bool operator==(const ScnConfig&, const ScnConfig&) = default;
};

enum class LatentMode { stochastic, deterministic };

/// Diagonal Gaussian, both fields rank-1 of length d.
struct Gaussian {
  Tensor mu, log_var;
};

/// Sentence-level semantics: all fields rank-1.
struct SemanticState {
  Tensor mu, log_var, z, pooled;
  Gaussian gaussian() const { return {mu, log_var}; }
};

/// Graph handles for one sentence's latent path. Row vectors {1, d}.
struct LatentVars {
  Var pooled, mu, log_var, z;
};

/// Convolutional summarizer, Gaussian heads and gated fusion.
/// Parameters: conv.{l}.w ((l*d) x maps), conv.{l}.b, mu.w/b, sigma.w/b,
/// gate.z, gate.x (d x d), gate.b, ln.g/b.
class Scn {
 public:
  Scn(const ScnConfig& cfg, std::uint64_t seed);

  const ScnConfig& config() const noexcept { return cfg_; }
  ParameterStore& params() noexcept { return params_; }
  const ParameterStore& params() const noexcept { return params_; }

  /// Max-over-time of relu(conv) per window, concatenated: {1, windows*maps}.
  /// Only the first `length` rows of H count; inputs shorter than a window are
  /// right-padded with zero rows.
  Var summarize(Graph& g, Var H, std::optional<std::size_t> length = std::nullopt);
  /// (mu, log_var), each {1, d}.
  std::pair<Var, Var> gaussian_heads(Graph& g, Var pooled);
  /// z = mu + exp(log_var / 2) * eps; deterministic mode returns mu itself.
  Var sample_latent(Graph& g, Var mu, Var log_var, LatentMode mode, Rng* rng);
  /// Row t: LayerNorm(g_t * z + (1 - g_t) * H_t), g_t = sigmoid(z W_gz + H_t W_gx + b_g).
  Var fuse(Graph& g, Var z, Var H);

  LatentVars latent(Graph& g, Var H, LatentMode mode, Rng* rng);

  NamedTensors state() const;
  static Scn from_state(const NamedTensors& tensors);

 private:
  Parameter& p(const std::string& name) { return params_.get(name); }

  ScnConfig cfg_;
  ParameterStore params_;
};

/// KL(q_bar || q) for diagonal Gaussians, as a scalar graph node.
Var kl_divergence(Var mu_bar, Var log_var_bar, Var mu, Var log_var);
double kl_divergence(const Gaussian& q_bar, const Gaussian& q);

/// Encoder + SCN path without gradients.
SemanticState infer_semantics(Seq2SeqModel& model, Scn& scn, const Sentence& x, LatentMode mode, Rng* rng);
/// Encoder memory fused with the sentence's own latent (deterministic z by default).
HiddenStates fused_memory(Seq2SeqModel& model, Scn& scn, const Sentence& x, LatentMode mode = LatentMode::deterministic,
                          Rng* rng = nullptr);

}  // namespace semaug
