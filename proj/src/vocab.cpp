#include "semaug/vocab.hpp"

#include <fstream>
#include <stdexcept>

namespace semaug {

Vocab::Vocab() {
  for (const char* t : {"<pad>", "<s>", "</s>", "<unk>"}) add(t);
}

TokenId Vocab::add(const std::string& token) {
  if (auto it = ids_.find(token); it != ids_.end()) return it->second;
  if (token.empty() || token.find_first_of(" \t\r\n") != std::string::npos) {
    throw std::invalid_argument("vocab: token must be non-empty and contain no whitespace");
  }
  tokens_.push_back(token);
  ids_.emplace(token, tokens_.size() - 1);
  return tokens_.size() - 1;
}

TokenId Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id >= tokens_.size()) throw std::out_of_range("vocab: id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

Sentence Vocab::encode(const std::vector<std::string>& words) const {
  Sentence out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

std::vector<std::string> Vocab::decode(const Sentence& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId i : ids) out.push_back(token(i));
  return out;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  for (const auto& t : tokens_) f << t << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  Vocab v;
  std::string line;
  std::size_t n = 0;
  while (std::getline(f, line)) {
    if (n < kNumReserved) {
      if (line != v.tokens_[n]) throw std::runtime_error("vocab file " + path.string() + ": bad reserved entry on line " + std::to_string(n + 1));
    } else if (v.add(line) != n) {
      throw std::runtime_error("vocab file " + path.string() + ": duplicate token '" + line + "'");
    }
    ++n;
  }
  if (n < kNumReserved) throw std::runtime_error("vocab file " + path.string() + " is missing reserved tokens");
  return v;
}

void validate_sentence(const Sentence& s, std::size_t vocab_size, const char* what) {
  if (s.empty()) throw std::invalid_argument(std::string(what) + ": empty sentence");
  for (TokenId t : s) {
    if (t == kPad) throw std::invalid_argument(std::string(what) + ": PAD inside sentence");
    if (t >= vocab_size) {
      throw std::invalid_argument(std::string(what) + ": token id " + std::to_string(t) + " >= vocab size " +
                                  std::to_string(vocab_size));
    }
  }
}

}  // namespace semaug
