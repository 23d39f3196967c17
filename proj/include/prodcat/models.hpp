#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "prodcat/embedding.hpp"
#include "prodcat/tensor.hpp"
#include "prodcat/util.hpp"

namespace prodcat::models {

enum class Arch { bilstm, transformer };

const char* arch_name(Arch arch);
Arch arch_from_name(const std::string& name);

enum class Pooling { first, mean };

struct LstmLayerSpec {
  std::size_t units = 100;
  double dropout = 0.2;
};

struct AttentionConfig {
  std::size_t num_heads = 4;
  std::size_t d_model = 64;
  std::size_t d_k = 16;
  std::size_t ff_dim = 128;
  std::size_t num_blocks = 2;
};

struct ModelConfig {
  Arch arch = Arch::bilstm;
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 100;
  std::size_t max_len = 38;
  double spatial_dropout_rate = 0.2;
  std::vector<LstmLayerSpec> lstm_layers{{100, 0.2}, {200, 0.2}};
  AttentionConfig attention{};
  double head_dropout = 0.2;
  Pooling pooling = Pooling::first;
  std::array<std::size_t, 4> head_sizes{};  // n_seg, n_cat, n_sub, n_prod

  void validate() const;
};

using MultiHeadLogits = std::array<ad::Tensor, 4>;

// One LSTM direction. Peephole weights are diagonal and stored as vectors.
struct LstmCellParams {
  ad::Tensor W_xi, W_hi, w_ci, b_i;
  ad::Tensor W_xf, W_hf, w_cf, b_f;
  ad::Tensor W_xc, W_hc, b_c;
  ad::Tensor W_xo, W_ho, w_co, b_o;
};

struct LstmState {
  ad::Tensor h;
  ad::Tensor c;
};

// One step of the peephole cell over a (batch, input_dim) slice:
//   i = sigmoid(x W_xi + h W_hi + c (.) w_ci + b_i)
//   f = sigmoid(x W_xf + h W_hf + c (.) w_cf + b_f)
//   c' = f (.) c + i (.) tanh(x W_xc + h W_hc + b_c)
//   o = sigmoid(x W_xo + h W_ho + c' (.) w_co + b_o)   <- new cell state
//   h' = o (.) tanh(c')
LstmState lstm_cell_step(ad::Tape& tape, const LstmCellParams& params,
                         const ad::Tensor& x, const LstmState& prev);

// softmax(Q K^T / sqrt(d_k)) V. Masked keys get a large negative score so
// their attention weight underflows to exactly zero.
ad::Tensor attention(ad::Tape& tape, const ad::Tensor& q, const ad::Tensor& k,
                     const ad::Tensor& v,
                     const std::vector<unsigned char>* key_mask = nullptr);

struct NamedParam {
  std::string name;
  ad::Tensor tensor;
};

class Model {
 public:
  virtual ~Model() = default;
  // ids: one post-padded row per sequence, all of equal length <= max_len.
  virtual MultiHeadLogits forward(ad::Tape& tape,
                                  const std::vector<std::vector<int>>& ids,
                                  bool train, Rng* dropout_rng) = 0;
  virtual std::vector<NamedParam> parameters() = 0;
  virtual const ModelConfig& config() const = 0;
};

struct AffineHead {
  ad::Tensor W;
  ad::Tensor b;
};

// Embedding -> spatial dropout -> stacked bidirectional peephole LSTM ->
// shared dropout -> four affine heads.
class BiLstmModel : public Model {
 public:
  BiLstmModel(ModelConfig cfg, std::uint64_t seed);

  void set_embedding(const embedding::EmbeddingMatrix& matrix);
  void freeze_embedding();

  MultiHeadLogits forward(ad::Tape& tape,
                          const std::vector<std::vector<int>>& ids, bool train,
                          Rng* dropout_rng) override;
  std::vector<NamedParam> parameters() override;
  const ModelConfig& config() const override { return cfg_; }

 private:
  struct Layer {
    LstmCellParams fwd;
    LstmCellParams bwd;
  };

  ModelConfig cfg_;
  ad::Tensor embedding_;
  bool embedding_frozen_ = false;
  std::vector<Layer> layers_;
  std::array<AffineHead, 4> heads_;
};

// Token + position embeddings -> encoder blocks (masked multi-head
// self-attention, residual + layer norm, feedforward, residual + layer
// norm) -> pooled vector -> dropout -> four affine heads.
class TransformerModel : public Model {
 public:
  TransformerModel(ModelConfig cfg, std::uint64_t seed);

  MultiHeadLogits forward(ad::Tape& tape,
                          const std::vector<std::vector<int>>& ids, bool train,
                          Rng* dropout_rng) override;
  std::vector<NamedParam> parameters() override;
  const ModelConfig& config() const override { return cfg_; }

  // Test hook for the permutation-invariance ablation.
  void zero_positional_embedding();

 private:
  struct Block {
    ad::Tensor W_q, b_q, W_k, b_k, W_v, b_v, W_o, b_o;
    ad::Tensor ln1_gain, ln1_bias;
    ad::Tensor ff_W1, ff_b1, ff_W2, ff_b2;
    ad::Tensor ln2_gain, ln2_bias;
  };

  ModelConfig cfg_;
  ad::Tensor token_embedding_;
  ad::Tensor position_embedding_;
  std::vector<Block> blocks_;
  std::array<AffineHead, 4> heads_;
};

std::unique_ptr<Model> make_model(const ModelConfig& cfg, std::uint64_t seed);

// Number of leading non-PAD ids (sequences are post-padded).
std::size_t sequence_length(const std::vector<int>& ids);

}  // namespace prodcat::models
