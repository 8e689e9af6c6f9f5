#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "semaug/checkpoint.hpp"
#include "semaug/graph.hpp"
#include "semaug/vocab.hpp"

namespace semaug {

struct ModelConfig {
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 2;
  std::size_t d_ff = 128;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Encoder output (T_x x d_model), possibly fused with sentence semantics.
using HiddenStates = Tensor;

/// Incremental decoder state: per-layer self-attention keys/values for the
/// prefix fed so far and the cross-attention projections of the memory.
struct DecoderCache {
  std::vector<TokenId> fed;  // tokens consumed so far, starting with BOS
  std::size_t memory_rows = 0;
  std::vector<Tensor> self_k, self_v, cross_k, cross_v;
};

/// Pre-norm Transformer encoder-decoder. Graph-building methods take
/// parameters by reference; on a graph with gradients disabled they only
/// read, so one model may serve several inference threads at once.
class Seq2SeqModel {
 public:
  Seq2SeqModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  ParameterStore& params() noexcept { return params_; }
  const ParameterStore& params() const noexcept { return params_; }

  /// Top encoder layer output, T_x x d_model.
  Var encode(Graph& g, const Sentence& x);
  /// Teacher-forced decoder logits for inputs [BOS, y_1..y_T]: (T+1) x V_tgt.
  Var decoder_logits(Graph& g, Var memory, const Sentence& y);
  /// Summed token cross-entropy of y followed by EOS given memory.
  Var nll(Graph& g, Var memory, const Sentence& y, double label_smoothing = 0.0);

  DecoderCache start(const HiddenStates& memory);
  /// Feeds prev_token and returns the next-token distribution (sums to 1).
  std::vector<double> decode_step(TokenId prev_token, DecoderCache& cache, const HiddenStates& memory);

  NamedTensors state() const;
  /// Rebuilds a model from a checkpoint written by state().
  static Seq2SeqModel from_state(const NamedTensors& tensors);

 private:
  Parameter& p(const std::string& name) { return params_.get(name); }
  Var attention(Graph& g, const std::string& prefix, Var queries, Var keys_values, std::optional<Var> mask);
  Var attend_heads(Var q, Var k, Var v, std::optional<Var> mask);
  Var feed_forward(Graph& g, const std::string& prefix, Var x);
  Var norm(Graph& g, const std::string& prefix, Var x);
  Var embed(Graph& g, const std::string& table, std::span<const TokenId> ids, std::size_t first_position);

  ModelConfig cfg_;
  ParameterStore params_;
};

Tensor positional_encoding(std::size_t first_position, std::size_t rows, std::size_t d_model);

/// Encodes x and returns the memory tensor (no gradients).
HiddenStates encode_memory(Seq2SeqModel& model, const Sentence& x);

/// Sum over y and the closing EOS of log P(y_i | y_<i, x). Uses memory_override
/// in place of the encoder output when given.
double log_likelihood(Seq2SeqModel& model, const Sentence& x, const Sentence& y,
                      const std::optional<HiddenStates>& memory_override = std::nullopt);

}  // namespace semaug
