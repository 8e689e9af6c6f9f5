#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "semaug/vocab.hpp"

namespace semaug {

struct SentencePair {
  Sentence src, tgt;
  friend bool operator==(const SentencePair&, const SentencePair&) = default;
};

enum class Provenance { real, synthetic, monolingual };

const char* provenance_name(Provenance p);

/// Whitespace-tokenized text corpus, still as words.
struct TextCorpus {
  std::vector<std::vector<std::string>> src, tgt;
  std::size_t dropped = 0;  // pairs over max_len
  Provenance provenance = Provenance::real;
};

/// Splits on ASCII whitespace.
std::vector<std::string> tokenize(const std::string& line);
std::vector<std::vector<std::string>> read_lines(const std::filesystem::path& path);
void write_lines(const std::filesystem::path& path, const std::vector<std::vector<std::string>>& lines);

/// Line-aligned source/target files. Pairs with an empty side or a side longer
/// than max_len tokens are dropped and counted.
TextCorpus load_parallel(const std::filesystem::path& src_path, const std::filesystem::path& tgt_path,
                         std::size_t max_len = 100);
void save_parallel(const std::filesystem::path& src_path, const std::filesystem::path& tgt_path,
                   const TextCorpus& corpus);

/// Keeps the max_size - 4 most frequent tokens; ties go to the earlier first occurrence.
Vocab build_vocab(const std::vector<std::vector<std::string>>& sentences, std::size_t max_size);

std::vector<SentencePair> encode_pairs(const TextCorpus& corpus, const Vocab& src_vocab, const Vocab& tgt_vocab);
std::vector<SentencePair> reversed(const std::vector<SentencePair>& pairs);

}  // namespace semaug
