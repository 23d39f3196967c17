#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "prodcat/textnorm.hpp"

namespace prodcat::corpus {

inline constexpr int kNumLevels = 4;

enum class Level { segment = 0, category = 1, subcategory = 2, product = 3 };

const char* level_name(Level level);
Level level_from_name(const std::string& name);

// One data row as read from the CSV, prior to cleaning.
struct RawRecord {
  std::string item;
  std::array<std::string, kNumLevels> labels;  // segment..product
  std::string source;
  std::size_t line_no = 0;
};

struct RejectedRow {
  std::size_t line_no = 0;
  std::string reason;  // "missing_field" | "field_count"
};

struct LoadResult {
  std::vector<RawRecord> records;
  std::vector<RejectedRow> rejected;
};

// Header names of the five mapped columns. Defaults match the Brazilian
// retail dataset; override via config or flags.
struct ColumnMap {
  std::string item = "nm_item";
  std::string segment = "segmento";
  std::string category = "categoria";
  std::string subcategory = "subcategoria";
  std::string product = "nm_product";
};

LoadResult load_csv(const std::filesystem::path& path, const ColumnMap& map,
                    char delimiter = ';');

// Normalized description plus the four hierarchy labels (coarse -> fine).
struct LabeledRecord {
  std::string item_text;
  std::array<std::string, kNumLevels> labels;
  std::string source;
};

struct Corpus {
  std::vector<LabeledRecord> records;
  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

struct CleanStats {
  std::size_t input_rows = 0;
  std::size_t dropped_missing = 0;
  std::size_t dropped_empty_text = 0;
  std::size_t dropped_duplicates = 0;
};

// Normalizes item text, uppercases labels, drops rows with missing fields or
// empty normalized text, then removes exact duplicates keeping the first
// occurrence. Normalization is pure per record and runs on `threads` workers.
Corpus clean(const std::vector<RawRecord>& records,
             const textnorm::Normalizer& normalizer,
             CleanStats* stats = nullptr, unsigned threads = 1);

using LabelMap = std::map<std::string, std::string>;

LabelMap load_label_map(const std::filesystem::path& path,
                        char delimiter = ';');

struct MergeStats {
  std::size_t unmapped_labels = 0;  // distinct labels of `extra` not in map
  std::size_t duplicates_removed = 0;
};

// Rewrites `extra`'s labels through the harmonization map (exact-string
// lookup; unmapped labels kept verbatim), concatenates and deduplicates.
Corpus merge_augmentation(const Corpus& base, const Corpus& extra,
                          const LabelMap& label_map,
                          MergeStats* stats = nullptr);

struct SplitSpec {
  std::array<double, 3> ratios{0.7, 0.15, 0.15};  // train, val, test
  std::uint64_t seed = 0;
  Level stratify_level = Level::product;

  void validate() const;  // ratios > 0 and summing to 1 +- 1e-9
};

struct Splits {
  Corpus train;
  Corpus val;
  Corpus test;
};

// Seeded per-stratum shuffle and partition. Strata with fewer than three
// records go entirely to train. Deterministic for a fixed seed.
Splits stratified_split(const Corpus& corpus, const SplitSpec& spec);

// Sorted-unique label lists per level with stable lexicographic index maps.
struct LabelSpace {
  std::array<std::vector<std::string>, kNumLevels> labels;
  std::array<std::map<std::string, int>, kNumLevels> index;

  int id(Level level, const std::string& label) const;  // -1 when unknown
  std::size_t size(Level level) const {
    return labels[static_cast<int>(level)].size();
  }
};

LabelSpace label_space(const Corpus& corpus);

void write_csv(const std::filesystem::path& path, const Corpus& corpus,
               const ColumnMap& map, char delimiter = ';');

}  // namespace prodcat::corpus
