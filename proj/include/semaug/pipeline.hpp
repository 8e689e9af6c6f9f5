#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "semaug/corpus.hpp"
#include "semaug/sampler.hpp"
#include "semaug/seq2seq.hpp"

namespace semaug {

/// Index of the highest log P(candidate | y) under the reverse model; lowest index on ties.
std::size_t best_candidate(Seq2SeqModel& reverse_model, const Sentence& y, const std::vector<Sentence>& candidates,
                           std::vector<double>* scores = nullptr);

/// Synthetic sources for monolingual targets. The best-scoring candidate
/// becomes the record's real source.
std::vector<SyntheticRecord> augment_monolingual(Seq2SeqModel& reverse_model, const std::vector<Sentence>& targets,
                                                 const SamplerConfig& cfg);

// ---- toy corpora ----------------------------------------------------------

enum class ToyKind {
  paraphrase,  // filler + synonym + clause-order variation over slot sentences
  clusters,    // six targets, many paraphrases each
  copy,        // token copy with two spellings per source token
};

ToyKind parse_toy_kind(const std::string& name);
const char* toy_kind_name(ToyKind kind);

struct ToyData {
  TextCorpus train, test;
  std::vector<std::vector<std::string>> mono;  // targets without sources
};

ToyData make_toy(ToyKind kind, std::uint64_t seed);

/// train.src/.tgt, test.src/.tgt and, when present, mono.tgt.
std::vector<std::filesystem::path> write_toy(const ToyData& data, const std::filesystem::path& dir);

// ---- manifest -------------------------------------------------------------

/// SHA-1 of "blob <size>\0" + bytes, as lowercase hex (same as `git hash-object`).
std::string git_blob_hash(const std::string& bytes);
std::string file_hash(const std::filesystem::path& path);
std::string sha1_hex(const std::string& bytes);

struct ManifestEntry {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;  // path -> content hash
  std::vector<std::string> outputs;
  bool completed = false;
};

class Manifest {
 public:
  /// Empty manifest if the file does not exist.
  static Manifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  const ManifestEntry* find(const std::string& command) const;
  void record(ManifestEntry entry);
  /// True when an identical completed entry exists and all its outputs are on disk.
  bool up_to_date(const ManifestEntry& candidate) const;

  std::size_t upsample_rate = 1;

 private:
  std::map<std::string, ManifestEntry> entries_;
};

}  // namespace semaug
