#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semaug/rng.hpp"
#include "semaug/seq2seq.hpp"
#include "semaug/vocab.hpp"

namespace semaug {

enum class EntropyBase { natural, bits };

struct SamplerConfig {
  double hbar = 2.5;
  std::size_t n_samples = 3;
  std::size_t max_len = 64;
  std::uint64_t seed = 0;
  EntropyBase base = EntropyBase::natural;

  void validate() const;
};

/// -sum p ln p (or log2), with 0 ln 0 = 0.
double entropy(std::span<const double> dist, EntropyBase base = EntropyBase::natural);

/// Multinomial draw when entropy(dist) >= hbar, otherwise argmax (lowest index on ties).
TokenId controllable_step(std::span<const double> dist, double hbar, Rng& rng,
                          EntropyBase base = EntropyBase::natural);

/// Inverse-CDF draw from a distribution.
TokenId multinomial(std::span<const double> dist, Rng& rng);

struct SampledSentence {
  Sentence tokens;  // without EOS
  bool truncated = false;
  double log_prob = 0.0;  // including EOS when not truncated
};

/// One source sentence decoded token by token with controllable_step over the
/// distribution with PAD and BOS removed. EOS is not allowed as the first token.
SampledSentence sample_sentence(Seq2SeqModel& reverse_model, const HiddenStates& memory, double hbar,
                                std::size_t max_len, Rng& rng, EntropyBase base = EntropyBase::natural);

struct SyntheticRecord {
  Sentence target;
  std::optional<Sentence> real_source;
  std::vector<Sentence> synthetic_sources;
  std::vector<std::uint64_t> seeds;  // one per synthetic source
  std::vector<bool> truncated;

  friend bool operator==(const SyntheticRecord&, const SyntheticRecord&) = default;
};

/// N synthetic sources for y; sample i uses the stream derive_seed(cfg.seed, record_index, i).
SyntheticRecord synthesize_sources(Seq2SeqModel& reverse_model, const Sentence& y, const SamplerConfig& cfg,
                                   std::size_t record_index = 0);

/// Records in input order, generated in parallel. real_sources is empty or aligned with targets.
std::vector<SyntheticRecord> synthesize_corpus(Seq2SeqModel& reverse_model, const std::vector<Sentence>& targets,
                                               const std::vector<Sentence>& real_sources, const SamplerConfig& cfg);

/// JSON object with keys target, real_source, synthetic_sources, seed, truncated (in that order).
std::string record_to_json(const SyntheticRecord& record, const Vocab& src_vocab, const Vocab& tgt_vocab);
SyntheticRecord record_from_json(const std::string& line, const Vocab& src_vocab, const Vocab& tgt_vocab);

void save_synthetic(const std::filesystem::path& path, const std::vector<SyntheticRecord>& records,
                    const Vocab& src_vocab, const Vocab& tgt_vocab);
std::vector<SyntheticRecord> load_synthetic(const std::filesystem::path& path, const Vocab& src_vocab,
                                            const Vocab& tgt_vocab);

}  // namespace semaug
