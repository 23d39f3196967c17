#include "prodcat/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>

#include "prodcat/util.hpp"

namespace prodcat::vocab {

namespace {
const std::string kPadToken = "<pad>";
const std::string kUnkToken = "<unk>";

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}
}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) tokens.emplace_back(text.substr(start, i - start));
  }
  return tokens;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts,
                             std::size_t max_words) {
  if (max_words < 3) throw DataError("max_words must be at least 3");
  if (texts.empty()) throw DataError("cannot build vocabulary from no texts");

  struct Entry {
    std::size_t count = 0;
    std::size_t first_seen = 0;
  };
  std::unordered_map<std::string, Entry> freq;
  std::size_t position = 0;
  for (const std::string& text : texts) {
    for (std::string& tok : tokenize(text)) {
      auto [it, inserted] = freq.try_emplace(std::move(tok));
      if (inserted) it->second.first_seen = position;
      ++it->second.count;
      ++position;
    }
  }

  std::vector<const std::pair<const std::string, Entry>*> ranked;
  ranked.reserve(freq.size());
  for (const auto& kv : freq) ranked.push_back(&kv);
  std::sort(ranked.begin(), ranked.end(), [](const auto* a, const auto* b) {
    if (a->second.count != b->second.count)
      return a->second.count > b->second.count;
    return a->second.first_seen < b->second.first_seen;
  });

  std::size_t keep = std::min(ranked.size(), max_words - 2);
  std::vector<std::string> tokens;
  tokens.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) tokens.push_back(ranked[i]->first);
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  v.token_to_id_.reserve(v.tokens_.size() * 2);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (v.tokens_[i].empty()) throw DataError("vocabulary token is empty");
    auto [it, inserted] =
        v.token_to_id_.emplace(v.tokens_[i], static_cast<int>(i) + 2);
    if (!inserted) {
      throw DataError("duplicate vocabulary token: " + v.tokens_[i]);
    }
  }
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open vocabulary file: " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open vocabulary file: " + path.string());
  for (const std::string& tok : tokens_) out << tok << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

int Vocabulary::id(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id == kPad) return kPadToken;
  if (id == kUnk) return kUnkToken;
  if (id < 0 || static_cast<std::size_t>(id) >= size()) {
    throw DataError("token id out of range: " + std::to_string(id));
  }
  return tokens_[static_cast<std::size_t>(id - 2)];
}

std::uint64_t Vocabulary::hash() const {
  std::string joined;
  for (const std::string& tok : tokens_) {
    joined.append(tok);
    joined.push_back('\n');
  }
  return fnv1a64(joined);
}

EncodedSequence encode(std::string_view text, const Vocabulary& vocab,
                       std::size_t max_len) {
  EncodedSequence seq;
  seq.ids.assign(max_len, Vocabulary::kPad);
  std::vector<std::string> tokens = tokenize(text);
  seq.length = std::min(tokens.size(), max_len);
  for (std::size_t i = 0; i < seq.length; ++i) {
    seq.ids[i] = vocab.id(tokens[i]);
  }
  return seq;
}

std::vector<std::string> decode(const std::vector<int>& ids,
                                const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id == Vocabulary::kPad) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

}  // namespace prodcat::vocab
