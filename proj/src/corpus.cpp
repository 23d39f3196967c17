#include "prodcat/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "prodcat/util.hpp"

namespace prodcat::corpus {

namespace {

struct CsvRow {
  std::vector<std::string> fields;
  std::size_t line_no = 0;
};

// RFC-4180-style parsing: quoted fields may contain the delimiter, doubled
// quotes and newlines.
std::vector<CsvRow> parse_csv(const std::string& text, char delimiter) {
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  bool in_quotes = false;
  bool row_started = false;
  std::size_t line = 1;
  row.line_no = 1;

  auto end_field = [&] {
    row.fields.push_back(field);
    field.clear();
  };
  auto end_row = [&] {
    if (row_started || !row.fields.empty()) {
      end_field();
      rows.push_back(std::move(row));
      row = CsvRow{};
    }
    row.line_no = line;
    row_started = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && field.empty()) {
      in_quotes = true;
      row_started = true;
    } else if (c == delimiter) {
      end_field();
      row_started = true;
    } else if (c == '\n') {
      ++line;
      end_row();
    } else if (c == '\r') {
      // swallowed; \r\n handled by the \n branch
    } else {
      field.push_back(c);
      row_started = true;
    }
  }
  if (row_started || !field.empty() || !row.fields.empty()) end_row();
  return rows;
}

std::string trim_field(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) --e;
  return s.substr(b, e - b);
}

std::string upper_ascii(std::string s) {
  for (char& c : s) {
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 32);
  }
  return s;
}

std::string dedup_key(const LabeledRecord& r) {
  std::string key = r.item_text;
  for (const std::string& l : r.labels) {
    key.push_back('\x1f');
    key.append(l);
  }
  return key;
}

void escape_csv_field(std::string& out, const std::string& field,
                      char delimiter) {
  bool needs_quotes =
      field.find(delimiter) != std::string::npos ||
      field.find('"') != std::string::npos ||
      field.find('\n') != std::string::npos ||
      field.find('\r') != std::string::npos;
  if (!needs_quotes) {
    out += field;
    return;
  }
  out.push_back('"');
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
}

}  // namespace

const char* level_name(Level level) {
  switch (level) {
    case Level::segment: return "segment";
    case Level::category: return "category";
    case Level::subcategory: return "subcategory";
    case Level::product: return "product";
  }
  return "?";
}

Level level_from_name(const std::string& name) {
  if (name == "segment") return Level::segment;
  if (name == "category") return Level::category;
  if (name == "subcategory") return Level::subcategory;
  if (name == "product") return Level::product;
  throw DataError("unknown hierarchy level: " + name);
}

LoadResult load_csv(const std::filesystem::path& path, const ColumnMap& map,
                    char delimiter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open input file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  // Strip a UTF-8 BOM if present.
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
      static_cast<unsigned char>(text[1]) == 0xBB &&
      static_cast<unsigned char>(text[2]) == 0xBF) {
    text.erase(0, 3);
  }

  std::vector<CsvRow> rows = parse_csv(text, delimiter);
  if (rows.empty()) throw DataError("empty CSV file: " + path.string());

  const std::vector<std::string>& header = rows[0].fields;
  auto column_of = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (trim_field(header[i]) == name) return static_cast<long>(i);
    }
    throw DataError("header of " + path.string() + " lacks column '" + name +
                    "'");
  };
  std::array<long, 5> cols = {column_of(map.item), column_of(map.segment),
                              column_of(map.category),
                              column_of(map.subcategory),
                              column_of(map.product)};

  LoadResult result;
  std::string source = path.filename().string();
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const CsvRow& row = rows[r];
    if (row.fields.size() != header.size()) {
      result.rejected.push_back({row.line_no, "field_count"});
      continue;
    }
    RawRecord rec;
    rec.item = trim_field(row.fields[static_cast<std::size_t>(cols[0])]);
    for (int l = 0; l < kNumLevels; ++l) {
      rec.labels[static_cast<std::size_t>(l)] =
          trim_field(row.fields[static_cast<std::size_t>(cols[l + 1])]);
    }
    bool missing = rec.item.empty();
    for (const std::string& label : rec.labels) missing = missing || label.empty();
    if (missing) {
      result.rejected.push_back({row.line_no, "missing_field"});
      continue;
    }
    rec.source = source;
    rec.line_no = row.line_no;
    result.records.push_back(std::move(rec));
  }
  return result;
}

Corpus clean(const std::vector<RawRecord>& records,
             const textnorm::Normalizer& normalizer, CleanStats* stats,
             unsigned threads) {
  CleanStats local;
  local.input_rows = records.size();

  std::vector<std::string> normalized(records.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      normalized[i] = normalizer.normalize(records[i].item);
    }
  };
  if (threads <= 1 || records.size() < 2 * threads) {
    work(0, records.size());
  } else {
    std::vector<std::thread> pool;
    std::size_t chunk = (records.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      std::size_t begin = std::min<std::size_t>(t * chunk, records.size());
      std::size_t end = std::min<std::size_t>(begin + chunk, records.size());
      if (begin < end) pool.emplace_back(work, begin, end);
    }
    for (std::thread& th : pool) th.join();
  }

  Corpus corpus;
  corpus.records.reserve(records.size());
  std::unordered_set<std::string> seen;
  seen.reserve(records.size() * 2);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const RawRecord& raw = records[i];
    bool missing = raw.item.empty();
    for (const std::string& label : raw.labels) missing = missing || label.empty();
    if (missing) {
      ++local.dropped_missing;
      continue;
    }
    if (normalized[i].empty()) {
      ++local.dropped_empty_text;
      continue;
    }
    LabeledRecord rec;
    rec.item_text = normalized[i];
    for (int l = 0; l < kNumLevels; ++l) {
      rec.labels[static_cast<std::size_t>(l)] =
          upper_ascii(raw.labels[static_cast<std::size_t>(l)]);
    }
    rec.source = raw.source;
    if (!seen.insert(dedup_key(rec)).second) {
      ++local.dropped_duplicates;
      continue;
    }
    corpus.records.push_back(std::move(rec));
  }
  if (stats) *stats = local;
  return corpus;
}

LabelMap load_label_map(const std::filesystem::path& path, char delimiter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open map file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  LabelMap map;
  for (const CsvRow& row : parse_csv(buf.str(), delimiter)) {
    if (row.fields.size() != 2) {
      throw DataError("map file " + path.string() + " line " +
                      std::to_string(row.line_no) +
                      ": expected two columns from;to");
    }
    map[trim_field(row.fields[0])] = trim_field(row.fields[1]);
  }
  return map;
}

Corpus merge_augmentation(const Corpus& base, const Corpus& extra,
                          const LabelMap& label_map, MergeStats* stats) {
  MergeStats local;
  std::unordered_set<std::string> unmapped;
  Corpus merged;
  merged.records.reserve(base.size() + extra.size());
  std::unordered_set<std::string> seen;
  seen.reserve((base.size() + extra.size()) * 2);

  for (const LabeledRecord& rec : base.records) {
    if (seen.insert(dedup_key(rec)).second) merged.records.push_back(rec);
  }
  for (const LabeledRecord& rec : extra.records) {
    LabeledRecord rewritten = rec;
    for (std::string& label : rewritten.labels) {
      auto it = label_map.find(label);
      if (it != label_map.end()) {
        label = it->second;
      } else {
        unmapped.insert(label);
      }
    }
    if (seen.insert(dedup_key(rewritten)).second) {
      merged.records.push_back(std::move(rewritten));
    }
  }
  local.unmapped_labels = unmapped.size();
  local.duplicates_removed = base.size() + extra.size() - merged.size();
  if (stats) *stats = local;
  return merged;
}

void SplitSpec::validate() const {
  double sum = ratios[0] + ratios[1] + ratios[2];
  if (ratios[0] <= 0 || ratios[1] <= 0 || ratios[2] <= 0 ||
      std::abs(sum - 1.0) > 1e-9) {
    throw DataError("split ratios must be > 0 and sum to 1");
  }
}

Splits stratified_split(const Corpus& corpus, const SplitSpec& spec) {
  spec.validate();
  if (corpus.empty()) throw DataError("cannot split an empty corpus");

  const int level = static_cast<int>(spec.stratify_level);
  std::map<std::string, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    strata[corpus.records[i].labels[static_cast<std::size_t>(level)]]
        .push_back(i);
  }

  std::vector<std::size_t> train_idx, val_idx, test_idx;
  for (auto& [label, indices] : strata) {
    if (indices.size() < 3) {
      train_idx.insert(train_idx.end(), indices.begin(), indices.end());
      continue;
    }
    Rng rng(spec.seed ^ fnv1a64(label));
    rng.shuffle(indices);

    // Largest-remainder apportionment so the three parts always cover the
    // stratum exactly.
    const std::size_t n = indices.size();
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> remainders{};
    std::size_t assigned = 0;
    for (int k = 0; k < 3; ++k) {
      double exact = spec.ratios[static_cast<std::size_t>(k)] *
                     static_cast<double>(n);
      counts[static_cast<std::size_t>(k)] =
          static_cast<std::size_t>(std::floor(exact));
      remainders[static_cast<std::size_t>(k)] =
          exact - std::floor(exact);
      assigned += counts[static_cast<std::size_t>(k)];
    }
    while (assigned < n) {
      int best = 0;
      for (int k = 1; k < 3; ++k) {
        if (remainders[static_cast<std::size_t>(k)] >
            remainders[static_cast<std::size_t>(best)]) {
          best = k;
        }
      }
      ++counts[static_cast<std::size_t>(best)];
      remainders[static_cast<std::size_t>(best)] = -1.0;
      ++assigned;
    }

    std::size_t pos = 0;
    for (std::size_t k = 0; k < counts[0]; ++k) train_idx.push_back(indices[pos++]);
    for (std::size_t k = 0; k < counts[1]; ++k) val_idx.push_back(indices[pos++]);
    for (std::size_t k = 0; k < counts[2]; ++k) test_idx.push_back(indices[pos++]);
  }

  auto collect = [&](std::vector<std::size_t>& idx) {
    std::sort(idx.begin(), idx.end());
    Corpus out;
    out.records.reserve(idx.size());
    for (std::size_t i : idx) out.records.push_back(corpus.records[i]);
    return out;
  };
  Splits splits;
  splits.train = collect(train_idx);
  splits.val = collect(val_idx);
  splits.test = collect(test_idx);
  return splits;
}

int LabelSpace::id(Level level, const std::string& label) const {
  const auto& map = index[static_cast<std::size_t>(static_cast<int>(level))];
  auto it = map.find(label);
  return it == map.end() ? -1 : it->second;
}

LabelSpace label_space(const Corpus& corpus) {
  if (corpus.empty()) throw DataError("cannot build label space: empty corpus");
  LabelSpace space;
  for (int l = 0; l < kNumLevels; ++l) {
    std::vector<std::string>& labels = space.labels[static_cast<std::size_t>(l)];
    for (const LabeledRecord& rec : corpus.records) {
      labels.push_back(rec.labels[static_cast<std::size_t>(l)]);
    }
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      space.index[static_cast<std::size_t>(l)][labels[i]] =
          static_cast<int>(i);
    }
  }
  return space;
}

void write_csv(const std::filesystem::path& path, const Corpus& corpus,
               const ColumnMap& map, char delimiter) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file: " + path.string());
  std::string buf;
  auto row = [&](const std::string& a, const std::string& b,
                 const std::string& c, const std::string& d,
                 const std::string& e) {
    escape_csv_field(buf, a, delimiter);
    buf.push_back(delimiter);
    escape_csv_field(buf, b, delimiter);
    buf.push_back(delimiter);
    escape_csv_field(buf, c, delimiter);
    buf.push_back(delimiter);
    escape_csv_field(buf, d, delimiter);
    buf.push_back(delimiter);
    escape_csv_field(buf, e, delimiter);
    buf.push_back('\n');
  };
  row(map.item, map.segment, map.category, map.subcategory, map.product);
  for (const LabeledRecord& rec : corpus.records) {
    row(rec.item_text, rec.labels[0], rec.labels[1], rec.labels[2],
        rec.labels[3]);
  }
  out << buf;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace prodcat::corpus
