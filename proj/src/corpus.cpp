#include "semaug/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace semaug {

const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::real:
      return "real";
    case Provenance::synthetic:
      return "synthetic";
    case Provenance::monolingual:
      return "monolingual-backtranslated";
  }
  return "?";
}

std::vector<std::string> tokenize(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(std::move(w));
  return out;
}

std::vector<std::vector<std::string>> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::vector<std::string>> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(tokenize(line));
  }
  return out;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::vector<std::string>>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& words : lines) {
    for (std::size_t i = 0; i < words.size(); ++i) out << (i ? " " : "") << words[i];
    out << '\n';
  }
}

TextCorpus load_parallel(const std::filesystem::path& src_path, const std::filesystem::path& tgt_path,
                         std::size_t max_len) {
  auto src = read_lines(src_path);
  auto tgt = read_lines(tgt_path);
  if (src.size() != tgt.size()) {
    throw std::invalid_argument("line count mismatch: " + src_path.string() + " has " + std::to_string(src.size()) +
                                ", " + tgt_path.string() + " has " + std::to_string(tgt.size()));
  }
  TextCorpus c;
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].empty() || tgt[i].empty() || src[i].size() > max_len || tgt[i].size() > max_len) {
      ++c.dropped;
      continue;
    }
    c.src.push_back(std::move(src[i]));
    c.tgt.push_back(std::move(tgt[i]));
  }
  return c;
}

void save_parallel(const std::filesystem::path& src_path, const std::filesystem::path& tgt_path,
                   const TextCorpus& corpus) {
  if (corpus.src.size() != corpus.tgt.size()) throw std::invalid_argument("save_parallel: unaligned corpus");
  write_lines(src_path, corpus.src);
  write_lines(tgt_path, corpus.tgt);
}

Vocab build_vocab(const std::vector<std::vector<std::string>>& sentences, std::size_t max_size) {
  if (max_size <= kNumReserved) throw std::invalid_argument("build_vocab: max_size must exceed the reserved ids");
  struct Entry {
    std::size_t count = 0, first = 0;
  };
  std::unordered_map<std::string, Entry> stats;
  std::vector<std::string> order;
  for (const auto& s : sentences) {
    for (const auto& w : s) {
      auto [it, fresh] = stats.try_emplace(w, Entry{0, order.size()});
      if (fresh) order.push_back(w);
      ++it->second.count;
    }
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](const std::string& a, const std::string& b) { return stats[a].count > stats[b].count; });
  Vocab v;
  for (const auto& w : order) {
    if (v.size() >= max_size) break;
    if (!v.contains(w)) v.add(w);
  }
  return v;
}

std::vector<SentencePair> encode_pairs(const TextCorpus& corpus, const Vocab& src_vocab, const Vocab& tgt_vocab) {
  std::vector<SentencePair> out;
  out.reserve(corpus.src.size());
  for (std::size_t i = 0; i < corpus.src.size(); ++i)
    out.push_back({src_vocab.encode(corpus.src[i]), tgt_vocab.encode(corpus.tgt[i])});
  return out;
}

std::vector<SentencePair> reversed(const std::vector<SentencePair>& pairs) {
  std::vector<SentencePair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({p.tgt, p.src});
  return out;
}

}  // namespace semaug
