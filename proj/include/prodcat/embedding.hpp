#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "prodcat/vocab.hpp"

namespace prodcat::embedding {

// Parsed word2vec/GloVe-style text file: `token v1 ... vd` per line with an
// optional `count dim` header line.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;
};

EmbeddingTable load_embedding_file(const std::filesystem::path& path);

// Dense (vocab_size x dim) initial embedding. Row 0 (PAD) is all zero;
// tokens absent from the table get seeded uniform values in [-0.05, 0.05].
struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> data;  // row-major
  double coverage = 0.0;     // fraction of real vocab tokens found

  double at(std::size_t row, std::size_t col) const {
    return data[row * dim + col];
  }
};

EmbeddingMatrix build_matrix(const EmbeddingTable& table,
                             const vocab::Vocabulary& vocab,
                             std::uint64_t seed);

}  // namespace prodcat::embedding
