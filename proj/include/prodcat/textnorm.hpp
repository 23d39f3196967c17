#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace prodcat::textnorm {

// Quantity+unit recognition rules. Each unit suffix defines one rule of the
// form digits (optional [.,] fraction) immediately followed by the unit; at
// every digit run the rules are tried in declared order and the first match
// wins. Longer units must therefore be declared before their prefixes
// ("ml" before "m"), which the default list respects.
struct NormalizerConfig {
  std::vector<std::string> units{"g", "kg", "mg", "ml", "l",
                                 "un", "cm", "mm", "m"};
  std::size_t min_token_len{2};
  std::string keep_chars{};                // extra characters clean_chars keeps
  std::vector<std::string> stop_tokens{};  // tokens filter_chars always drops
};

// Five-stage cleanup for raw item descriptions:
//   lowercase -> strip special characters -> split fused quantity+unit
//   tokens -> condense whitespace -> drop short junk tokens.
// All stages are pure; a Normalizer is immutable and safe to share across
// threads.
class Normalizer {
 public:
  Normalizer() : Normalizer(NormalizerConfig{}) {}
  explicit Normalizer(NormalizerConfig cfg);

  std::string to_lowercase(std::string_view text) const;
  std::string clean_chars(std::string_view text) const;
  std::string extract_units(std::string_view text) const;
  static std::string condense_spaces(std::string_view text);
  std::string filter_chars(std::string_view text) const;

  // Composition of the five stages, in that order.
  std::string normalize(std::string_view text) const;

  const NormalizerConfig& config() const { return cfg_; }

 private:
  bool is_kept(char32_t cp) const;
  // Returns the matched unit length at s[pos] or 0; first match in declared
  // order wins.
  std::size_t match_unit(std::string_view s, std::size_t pos) const;
  bool is_quantity_unit_token(std::string_view token) const;
  bool is_unit_token(std::string_view token) const;

  NormalizerConfig cfg_;
  std::vector<char32_t> keep_codepoints_;
};

}  // namespace prodcat::textnorm
