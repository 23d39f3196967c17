#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "prodcat/corpus.hpp"
#include "prodcat/models.hpp"
#include "prodcat/textnorm.hpp"
#include "prodcat/vocab.hpp"

namespace prodcat {

// Self-contained training artifact.
//
// Binary layout, bit-exact:
//   magic "HCKP", version byte 0x01;
//   UTF-8 header of `key=value` lines terminated by one blank line — the
//   full model config, normalizer config, label spaces, vocabulary tokens,
//   vocabulary hash (FNV-1a 64, hex) and creation seed, plus a `params`
//   line declaring parameter order;
//   then for each declared parameter: its name as a '\n'-terminated UTF-8
//   line, a 32-bit little-endian float count, and that many little-endian
//   32-bit floats.
//
// The loader rejects an unknown magic or version and a vocabulary whose
// recomputed hash does not match the header.
struct Checkpoint {
  models::ModelConfig config;
  textnorm::NormalizerConfig norm;
  corpus::LabelSpace labels;
  std::vector<std::string> vocab_tokens;  // ids 2..; PAD/UNK implicit
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::vector<float>>> params;

  vocab::Vocabulary vocabulary() const;
  std::uint64_t vocab_hash() const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

// Rebuilds the architecture and overwrites its parameters with the stored
// values (widened to 64-bit).
std::unique_ptr<models::Model> restore_model(const Checkpoint& ckpt);

// Snapshot of a live model's parameters (narrowed to 32-bit storage).
std::vector<std::pair<std::string, std::vector<float>>> snapshot_params(
    models::Model& model);

}  // namespace prodcat
