#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace prodcat::vocab {

std::vector<std::string> tokenize(std::string_view text);  // whitespace split

// Token table with reserved PAD=0 and UNK=1. Immutable after build; encode
// and decode are pure.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  // Tokens ranked by (frequency desc, first occurrence asc); the top
  // max_words - 2 survive. Build from the train split only.
  static Vocabulary build(const std::vector<std::string>& texts,
                          std::size_t max_words);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  // Text format: one token per line, line number = id - 2.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  int id(std::string_view token) const;  // kUnk when missing
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size() + 2; }

  // Real tokens only (ids 2..size-1), in id order.
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::uint64_t hash() const;  // FNV-1a over tokens joined by '\n'

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> token_to_id_;
};

struct EncodedSequence {
  std::vector<int> ids;       // exactly max_len entries
  std::size_t length = 0;     // token count before padding, capped at max_len
};

// Whitespace tokens mapped through the vocabulary (missing -> UNK), leftmost
// max_len kept, post-padded with PAD.
EncodedSequence encode(std::string_view text, const Vocabulary& vocab,
                       std::size_t max_len);

// Inverse of encode up to UNK/PAD loss; PAD ids are dropped.
std::vector<std::string> decode(const std::vector<int>& ids,
                                const Vocabulary& vocab);

}  // namespace prodcat::vocab
