#include "prodcat/embedding.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "prodcat/util.hpp"

namespace prodcat::embedding {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const char* begin = s.data();
  const char* end = begin + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc{} && ptr == end && std::isfinite(out);
}

bool parse_size(std::string_view s, std::size_t& out) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc{} && ptr == end;
}

}  // namespace

EmbeddingTable load_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding file: " + path.string());

  EmbeddingTable table;
  std::string line;
  std::size_t line_no = 0;
  bool first_content_line = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string_view> fields = split_ws(line);
    if (fields.empty()) continue;

    if (first_content_line) {
      first_content_line = false;
      std::size_t count = 0, dim = 0;
      if (fields.size() == 2 && parse_size(fields[0], count) &&
          parse_size(fields[1], dim)) {
        table.dim = dim;  // header line `count dim`
        continue;
      }
    }

    if (fields.size() < 2) {
      throw DataError(path.string() + " line " + std::to_string(line_no) +
                      ": expected token followed by vector components");
    }
    std::vector<double> vec;
    vec.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      double v = 0;
      if (!parse_double(fields[i], v)) {
        throw DataError(path.string() + " line " + std::to_string(line_no) +
                        ": non-numeric component '" + std::string(fields[i]) +
                        "'");
      }
      vec.push_back(v);
    }
    if (table.dim == 0) {
      table.dim = vec.size();
    } else if (vec.size() != table.dim) {
      throw DataError(path.string() + " line " + std::to_string(line_no) +
                      ": expected " + std::to_string(table.dim) +
                      " components, got " + std::to_string(vec.size()));
    }
    table.vectors.try_emplace(std::string(fields[0]), std::move(vec));
  }
  if (table.dim == 0) {
    throw DataError("embedding file has no vectors: " + path.string());
  }
  return table;
}

EmbeddingMatrix build_matrix(const EmbeddingTable& table,
                             const vocab::Vocabulary& vocab,
                             std::uint64_t seed) {
  if (table.dim == 0) throw DataError("embedding table has dimension 0");

  EmbeddingMatrix m;
  m.rows = vocab.size();
  m.dim = table.dim;
  m.data.assign(m.rows * m.dim, 0.0);

  Rng rng(seed);
  std::size_t found = 0;
  // Row 0 (PAD) stays zero. UNK and any missing token get small uniform
  // values; iteration in id order keeps the draw sequence deterministic.
  for (std::size_t row = 1; row < m.rows; ++row) {
    const std::vector<double>* vec = nullptr;
    if (row >= 2) {
      auto it = table.vectors.find(vocab.token(static_cast<int>(row)));
      if (it != table.vectors.end()) vec = &it->second;
    }
    if (vec) {
      ++found;
      for (std::size_t c = 0; c < m.dim; ++c) m.data[row * m.dim + c] = (*vec)[c];
    } else {
      for (std::size_t c = 0; c < m.dim; ++c) {
        m.data[row * m.dim + c] = rng.uniform(-0.05, 0.05);
      }
    }
  }
  std::size_t real_tokens = vocab.size() - 2;
  m.coverage = real_tokens == 0
                   ? 0.0
                   : static_cast<double>(found) /
                         static_cast<double>(real_tokens);
  return m;
}

}  // namespace prodcat::embedding
