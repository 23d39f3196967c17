#include "prodcat/textnorm.hpp"

#include <algorithm>
#include <cctype>

namespace prodcat::textnorm {

namespace {

bool is_ascii_digit(char32_t cp) { return cp >= U'0' && cp <= U'9'; }
bool is_ascii_lower(char32_t cp) { return cp >= U'a' && cp <= U'z'; }

bool is_ascii_digit_ch(char c) { return c >= '0' && c <= '9'; }
bool is_ascii_letter_ch(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

// Lenient UTF-8 decoding; a malformed byte decodes to U+FFFD and consumes
// one byte, so every input produces some output.
std::vector<char32_t> decode_utf8(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    unsigned char b0 = static_cast<unsigned char>(s[i]);
    char32_t cp = 0xFFFD;
    std::size_t len = 1;
    if (b0 < 0x80) {
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0 && i + 1 < s.size() &&
               (static_cast<unsigned char>(s[i + 1]) & 0xC0) == 0x80) {
      cp = static_cast<char32_t>(b0 & 0x1F) << 6 |
           (static_cast<unsigned char>(s[i + 1]) & 0x3F);
      len = 2;
    } else if ((b0 & 0xF0) == 0xE0 && i + 2 < s.size() &&
               (static_cast<unsigned char>(s[i + 1]) & 0xC0) == 0x80 &&
               (static_cast<unsigned char>(s[i + 2]) & 0xC0) == 0x80) {
      cp = static_cast<char32_t>(b0 & 0x0F) << 12 |
           (static_cast<char32_t>(static_cast<unsigned char>(s[i + 1]) & 0x3F)
            << 6) |
           (static_cast<unsigned char>(s[i + 2]) & 0x3F);
      len = 3;
    } else if ((b0 & 0xF8) == 0xF0 && i + 3 < s.size() &&
               (static_cast<unsigned char>(s[i + 1]) & 0xC0) == 0x80 &&
               (static_cast<unsigned char>(s[i + 2]) & 0xC0) == 0x80 &&
               (static_cast<unsigned char>(s[i + 3]) & 0xC0) == 0x80) {
      cp = static_cast<char32_t>(b0 & 0x07) << 18 |
           (static_cast<char32_t>(static_cast<unsigned char>(s[i + 1]) & 0x3F)
            << 12) |
           (static_cast<char32_t>(static_cast<unsigned char>(s[i + 2]) & 0x3F)
            << 6) |
           (static_cast<unsigned char>(s[i + 3]) & 0x3F);
      len = 4;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

char32_t lower_codepoint(char32_t cp) {
  if (cp >= U'A' && cp <= U'Z') return cp + 0x20;
  // Latin-1 Supplement uppercase block, excluding the multiplication sign.
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
  return cp;
}

// Fixed transliteration table for accented Latin letters (Portuguese-focused).
// Maps to the same-case base letter; returns 0 when not in the table.
char32_t strip_accent(char32_t cp) {
  switch (cp) {
    case 0xE0: case 0xE1: case 0xE2: case 0xE3: case 0xE4: case 0xE5:
      return U'a';
    case 0xE7:
      return U'c';
    case 0xE8: case 0xE9: case 0xEA: case 0xEB:
      return U'e';
    case 0xEC: case 0xED: case 0xEE: case 0xEF:
      return U'i';
    case 0xF1:
      return U'n';
    case 0xF2: case 0xF3: case 0xF4: case 0xF5: case 0xF6:
      return U'o';
    case 0xF9: case 0xFA: case 0xFB: case 0xFC:
      return U'u';
    case 0xFD: case 0xFF:
      return U'y';
    case 0xC0: case 0xC1: case 0xC2: case 0xC3: case 0xC4: case 0xC5:
      return U'A';
    case 0xC7:
      return U'C';
    case 0xC8: case 0xC9: case 0xCA: case 0xCB:
      return U'E';
    case 0xCC: case 0xCD: case 0xCE: case 0xCF:
      return U'I';
    case 0xD1:
      return U'N';
    case 0xD2: case 0xD3: case 0xD4: case 0xD5: case 0xD6:
      return U'O';
    case 0xD9: case 0xDA: case 0xDB: case 0xDC:
      return U'U';
    case 0xDD:
      return U'Y';
    default:
      return 0;
  }
}

bool is_whitespace(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

std::vector<std::string_view> split_tokens(std::string_view s) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_whitespace(s[i])) ++i;
    std::size_t start = i;
    while (i < s.size() && !is_whitespace(s[i])) ++i;
    if (i > start) tokens.push_back(s.substr(start, i - start));
  }
  return tokens;
}

}  // namespace

Normalizer::Normalizer(NormalizerConfig cfg) : cfg_(std::move(cfg)) {
  keep_codepoints_ = decode_utf8(cfg_.keep_chars);
}

bool Normalizer::is_kept(char32_t cp) const {
  if (is_ascii_lower(cp) || is_ascii_digit(cp) || cp == U' ') return true;
  return std::find(keep_codepoints_.begin(), keep_codepoints_.end(), cp) !=
         keep_codepoints_.end();
}

std::string Normalizer::to_lowercase(std::string_view text) const {
  std::string out;
  out.reserve(text.size());
  for (char32_t cp : decode_utf8(text)) append_utf8(out, lower_codepoint(cp));
  return out;
}

std::string Normalizer::clean_chars(std::string_view text) const {
  std::string out;
  out.reserve(text.size());
  for (char32_t cp : decode_utf8(text)) {
    if (char32_t base = strip_accent(cp)) cp = base;
    if (is_kept(cp)) {
      append_utf8(out, cp);
    } else {
      out.push_back(' ');
    }
  }
  return out;
}

std::size_t Normalizer::match_unit(std::string_view s, std::size_t pos) const {
  for (const std::string& u : cfg_.units) {
    if (!u.empty() && s.compare(pos, u.size(), u) == 0) return u.size();
  }
  return 0;
}

std::string Normalizer::extract_units(std::string_view text) const {
  std::string out;
  out.reserve(text.size() + 8);
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    if (!is_ascii_digit_ch(text[i])) {
      out.push_back(text[i]);
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && is_ascii_digit_ch(text[j])) ++j;
    if (j < n && (text[j] == '.' || text[j] == ',') && j + 1 < n &&
        is_ascii_digit_ch(text[j + 1])) {
      ++j;
      while (j < n && is_ascii_digit_ch(text[j])) ++j;
    }
    std::size_t unit_len = match_unit(text, j);
    std::size_t end = j + unit_len;
    out.append(text.substr(i, end - i));
    // Only unit->letter boundaries are split; a standalone quantity+unit
    // token stays as-is.
    if (unit_len > 0 && end < n && is_ascii_letter_ch(text[end])) {
      out.push_back(' ');
    }
    i = end;
  }
  return out;
}

std::string Normalizer::condense_spaces(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_whitespace(c)) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(c);
    }
  }
  return out;
}

bool Normalizer::is_unit_token(std::string_view token) const {
  for (const std::string& u : cfg_.units) {
    if (token == u) return true;
  }
  return false;
}

bool Normalizer::is_quantity_unit_token(std::string_view token) const {
  if (token.empty() || !is_ascii_digit_ch(token[0])) return false;
  std::size_t i = 0;
  while (i < token.size() && is_ascii_digit_ch(token[i])) ++i;
  if (i < token.size() && (token[i] == '.' || token[i] == ',') &&
      i + 1 < token.size() && is_ascii_digit_ch(token[i + 1])) {
    ++i;
    while (i < token.size() && is_ascii_digit_ch(token[i])) ++i;
  }
  if (i == token.size()) return false;
  return is_unit_token(token.substr(i));
}

std::string Normalizer::filter_chars(std::string_view text) const {
  std::string out;
  out.reserve(text.size());
  for (std::string_view token : split_tokens(text)) {
    bool stopped = std::find(cfg_.stop_tokens.begin(), cfg_.stop_tokens.end(),
                             token) != cfg_.stop_tokens.end();
    if (stopped) continue;
    bool keep = token.size() >= cfg_.min_token_len;
    if (!keep) {
      bool all_digits = std::all_of(token.begin(), token.end(),
                                    [](char c) { return is_ascii_digit_ch(c); });
      keep = all_digits || is_quantity_unit_token(token) ||
             is_unit_token(token);
    }
    if (keep) {
      if (!out.empty()) out.push_back(' ');
      out.append(token);
    }
  }
  return out;
}

std::string Normalizer::normalize(std::string_view text) const {
  return filter_chars(
      condense_spaces(extract_units(clean_chars(to_lowercase(text)))));
}

}  // namespace prodcat::textnorm
