#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace semaug {

using TokenId = std::size_t;
/// Token ids without BOS/EOS framing or padding.
using Sentence = std::vector<TokenId>;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr std::size_t kNumReserved = 4;

class Vocab {
 public:
  Vocab();

  /// Adds a token if absent; returns its id.
  TokenId add(const std::string& token);
  TokenId id(const std::string& token) const;
  const std::string& token(TokenId id) const;
  bool contains(const std::string& token) const { return ids_.count(token) > 0; }
  std::size_t size() const noexcept { return tokens_.size(); }

  Sentence encode(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(const Sentence& ids) const;

  /// One token per line; line number is the id.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

/// Throws std::invalid_argument if the sentence is empty, contains PAD, or has ids >= vocab_size.
void validate_sentence(const Sentence& s, std::size_t vocab_size, const char* what);

}  // namespace semaug
