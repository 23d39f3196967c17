#include "prodcat/models.hpp"

#include <cmath>

namespace prodcat::models {

namespace {

constexpr double kMaskedScore = -1e30;
constexpr double kEmbeddingInitRange = 0.05;

ad::Tensor glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out,
                  ad::Shape shape) {
  const double bound =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> values(ad::numel(shape));
  for (double& v : values) v = rng.uniform(-bound, bound);
  return ad::Tensor::from(std::move(shape), std::move(values), true);
}

ad::Tensor constant_bias(std::size_t n, double value) {
  return ad::Tensor(ad::Shape{n}, value, true);
}

ad::Tensor embedding_init(Rng& rng, std::size_t rows, std::size_t dim,
                          bool zero_row0) {
  std::vector<double> values(rows * dim);
  for (double& v : values) {
    v = rng.uniform(-kEmbeddingInitRange, kEmbeddingInitRange);
  }
  if (zero_row0) {
    for (std::size_t c = 0; c < dim; ++c) values[c] = 0.0;
  }
  return ad::Tensor::from({rows, dim}, std::move(values), true);
}

LstmCellParams init_cell(Rng& rng, std::size_t in_dim, std::size_t units) {
  LstmCellParams p;
  p.W_xi = glorot(rng, in_dim, units, {in_dim, units});
  p.W_hi = glorot(rng, units, units, {units, units});
  p.w_ci = glorot(rng, units, units, {units});
  p.b_i = constant_bias(units, 0.0);
  p.W_xf = glorot(rng, in_dim, units, {in_dim, units});
  p.W_hf = glorot(rng, units, units, {units, units});
  p.w_cf = glorot(rng, units, units, {units});
  p.b_f = constant_bias(units, 1.0);  // forget gate starts open
  p.W_xc = glorot(rng, in_dim, units, {in_dim, units});
  p.W_hc = glorot(rng, units, units, {units, units});
  p.b_c = constant_bias(units, 0.0);
  p.W_xo = glorot(rng, in_dim, units, {in_dim, units});
  p.W_ho = glorot(rng, units, units, {units, units});
  p.w_co = glorot(rng, units, units, {units});
  p.b_o = constant_bias(units, 0.0);
  return p;
}

void append_cell_params(std::vector<NamedParam>& out, const std::string& base,
                        const LstmCellParams& p) {
  out.push_back({base + ".W_xi", p.W_xi});
  out.push_back({base + ".W_hi", p.W_hi});
  out.push_back({base + ".w_ci", p.w_ci});
  out.push_back({base + ".b_i", p.b_i});
  out.push_back({base + ".W_xf", p.W_xf});
  out.push_back({base + ".W_hf", p.W_hf});
  out.push_back({base + ".w_cf", p.w_cf});
  out.push_back({base + ".b_f", p.b_f});
  out.push_back({base + ".W_xc", p.W_xc});
  out.push_back({base + ".W_hc", p.W_hc});
  out.push_back({base + ".b_c", p.b_c});
  out.push_back({base + ".W_xo", p.W_xo});
  out.push_back({base + ".W_ho", p.W_ho});
  out.push_back({base + ".w_co", p.w_co});
  out.push_back({base + ".b_o", p.b_o});
}

std::array<AffineHead, 4> init_heads(Rng& rng, std::size_t in_dim,
                                     const std::array<std::size_t, 4>& sizes) {
  std::array<AffineHead, 4> heads;
  for (std::size_t h = 0; h < 4; ++h) {
    heads[h].W = glorot(rng, in_dim, sizes[h], {in_dim, sizes[h]});
    heads[h].b = constant_bias(sizes[h], 0.0);
  }
  return heads;
}

void append_heads(std::vector<NamedParam>& out,
                  const std::array<AffineHead, 4>& heads) {
  static const char* names[4] = {"segment", "category", "subcategory",
                                 "product"};
  for (std::size_t h = 0; h < 4; ++h) {
    out.push_back({std::string("head.") + names[h] + ".W", heads[h].W});
    out.push_back({std::string("head.") + names[h] + ".b", heads[h].b});
  }
}

std::vector<std::size_t> lengths_of(const std::vector<std::vector<int>>& ids,
                                    std::size_t max_len) {
  if (ids.empty()) throw DataError("forward: empty batch");
  const std::size_t len = ids[0].size();
  if (len == 0 || len > max_len) {
    throw DataError("forward: sequence length " + std::to_string(len) +
                    " incompatible with max_len " + std::to_string(max_len));
  }
  std::vector<std::size_t> lengths(ids.size());
  for (std::size_t b = 0; b < ids.size(); ++b) {
    if (ids[b].size() != len) {
      throw DataError("forward: ragged batch");
    }
    lengths[b] = sequence_length(ids[b]);
  }
  return lengths;
}

}  // namespace

const char* arch_name(Arch arch) {
  return arch == Arch::bilstm ? "bilstm" : "transformer";
}

Arch arch_from_name(const std::string& name) {
  if (name == "bilstm") return Arch::bilstm;
  if (name == "transformer") return Arch::transformer;
  throw DataError("unknown architecture: " + name);
}

void ModelConfig::validate() const {
  if (vocab_size < 2) throw DataError("model config: vocab_size must be >= 2");
  if (embed_dim == 0 || max_len == 0) {
    throw DataError("model config: embed_dim and max_len must be positive");
  }
  auto check_rate = [](double r, const char* what) {
    if (r < 0.0 || r >= 1.0) {
      throw DataError(std::string("model config: ") + what +
                      " must lie in [0,1)");
    }
  };
  check_rate(spatial_dropout_rate, "spatial_dropout_rate");
  check_rate(head_dropout, "head_dropout");
  for (const auto& size : head_sizes) {
    if (size == 0) throw DataError("model config: empty label space");
  }
  if (arch == Arch::bilstm) {
    if (lstm_layers.empty()) {
      throw DataError("model config: bilstm needs at least one layer");
    }
    for (const LstmLayerSpec& l : lstm_layers) {
      if (l.units == 0) throw DataError("model config: zero LSTM units");
      check_rate(l.dropout, "lstm layer dropout");
    }
  } else {
    const AttentionConfig& a = attention;
    if (a.num_heads == 0 || a.d_model == 0 || a.d_k == 0 || a.ff_dim == 0 ||
        a.num_blocks == 0) {
      throw DataError("model config: attention dims must be positive");
    }
    if (a.num_heads * a.d_k != a.d_model) {
      throw DataError("model config: num_heads * d_k must equal d_model");
    }
  }
}

std::size_t sequence_length(const std::vector<int>& ids) {
  std::size_t len = 0;
  while (len < ids.size() && ids[len] != 0) ++len;
  return len;
}

LstmState lstm_cell_step(ad::Tape& tape, const LstmCellParams& params,
                         const ad::Tensor& x, const LstmState& prev) {
  auto gate_pre = [&](const ad::Tensor& W_x, const ad::Tensor& W_h,
                      const ad::Tensor* w_peep, const ad::Tensor& peep_src,
                      const ad::Tensor& b) {
    ad::Tensor z = tape.add(tape.matmul(x, W_x), tape.matmul(prev.h, W_h));
    if (w_peep) z = tape.add(z, tape.mul(peep_src, *w_peep));
    return tape.add(z, b);
  };

  ad::Tensor i_gate = tape.sigmoid(
      gate_pre(params.W_xi, params.W_hi, &params.w_ci, prev.c, params.b_i));
  ad::Tensor f_gate = tape.sigmoid(
      gate_pre(params.W_xf, params.W_hf, &params.w_cf, prev.c, params.b_f));
  ad::Tensor candidate = tape.tanh(
      gate_pre(params.W_xc, params.W_hc, nullptr, prev.c, params.b_c));
  ad::Tensor c_next = tape.add(tape.mul(f_gate, prev.c),
                               tape.mul(i_gate, candidate));
  // The output gate peeks at the NEW cell state.
  ad::Tensor o_gate = tape.sigmoid(
      gate_pre(params.W_xo, params.W_ho, &params.w_co, c_next, params.b_o));
  ad::Tensor h_next = tape.mul(o_gate, tape.tanh(c_next));
  return {h_next, c_next};
}

ad::Tensor attention(ad::Tape& tape, const ad::Tensor& q, const ad::Tensor& k,
                     const ad::Tensor& v,
                     const std::vector<unsigned char>* key_mask) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw DataError("attention: Q, K, V must be 2D");
  }
  if (q.dim(1) != k.dim(1)) {
    throw DataError("attention: d_k mismatch " +
                    ad::shape_str(q.shape()) + " vs " +
                    ad::shape_str(k.shape()));
  }
  if (k.dim(0) != v.dim(0)) {
    throw DataError("attention: K and V row counts differ");
  }
  if (key_mask && key_mask->size() != k.dim(0)) {
    throw DataError("attention: mask length mismatch");
  }
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  ad::Tensor scores =
      tape.affine(tape.matmul(q, tape.transpose(k)), inv_sqrt_dk, 0.0);
  if (key_mask) {
    std::vector<double> bias(k.dim(0), 0.0);
    for (std::size_t j = 0; j < bias.size(); ++j) {
      if (!(*key_mask)[j]) bias[j] = kMaskedScore;
    }
    scores = tape.add(scores, ad::Tensor::from({k.dim(0)}, std::move(bias)));
  }
  return tape.matmul(tape.softmax(scores, 1), v);
}

// ---------------------------------------------------------------------------
// BiLSTM
// ---------------------------------------------------------------------------

BiLstmModel::BiLstmModel(ModelConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)) {
  cfg_.arch = Arch::bilstm;
  cfg_.validate();
  Rng rng(seed);
  embedding_ = embedding_init(rng, cfg_.vocab_size, cfg_.embed_dim, true);
  std::size_t in_dim = cfg_.embed_dim;
  for (const LstmLayerSpec& spec : cfg_.lstm_layers) {
    Layer layer;
    layer.fwd = init_cell(rng, in_dim, spec.units);
    layer.bwd = init_cell(rng, in_dim, spec.units);
    layers_.push_back(std::move(layer));
    in_dim = 2 * spec.units;
  }
  heads_ = init_heads(rng, in_dim, cfg_.head_sizes);
}

void BiLstmModel::set_embedding(const embedding::EmbeddingMatrix& matrix) {
  if (matrix.rows != cfg_.vocab_size || matrix.dim != cfg_.embed_dim) {
    throw DataError("embedding matrix " + std::to_string(matrix.rows) + "x" +
                    std::to_string(matrix.dim) + " does not match model " +
                    std::to_string(cfg_.vocab_size) + "x" +
                    std::to_string(cfg_.embed_dim));
  }
  embedding_.data() = matrix.data;
}

// Frozen embeddings stay in parameters() so they are checkpointed; the
// trainer excludes non-tracking tensors from the optimizer.
void BiLstmModel::freeze_embedding() {
  embedding_.set_requires_grad(false);
  embedding_frozen_ = true;
}

MultiHeadLogits BiLstmModel::forward(ad::Tape& tape,
                                     const std::vector<std::vector<int>>& ids,
                                     bool train, Rng* dropout_rng) {
  const std::vector<std::size_t> lengths = lengths_of(ids, cfg_.max_len);
  const std::size_t batch = ids.size();
  const std::size_t seq_len = ids[0].size();
  const bool dropping = train && dropout_rng != nullptr;

  std::vector<ad::Tensor> xs(seq_len);
  {
    std::vector<int> column(batch);
    for (std::size_t t = 0; t < seq_len; ++t) {
      for (std::size_t b = 0; b < batch; ++b) column[b] = ids[b][t];
      xs[t] = tape.embedding_lookup(embedding_, column, vocab::Vocabulary::kPad);
    }
  }

  // Spatial dropout: one mask per sequence, shared across timesteps, so a
  // dropped embedding channel vanishes for the whole sequence.
  if (dropping && cfg_.spatial_dropout_rate > 0.0) {
    Rng mask_rng(dropout_rng->next_u64());
    const double scale = 1.0 / (1.0 - cfg_.spatial_dropout_rate);
    std::vector<double> mask(batch * cfg_.embed_dim);
    for (double& m : mask) {
      m = mask_rng.uniform() >= cfg_.spatial_dropout_rate ? scale : 0.0;
    }
    ad::Tensor mask_t =
        ad::Tensor::from({batch, cfg_.embed_dim}, std::move(mask));
    for (ad::Tensor& x : xs) x = tape.mul(x, mask_t);
  }

  ad::Tensor final_fwd, final_bwd;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const std::size_t units = cfg_.lstm_layers[l].units;

    std::vector<ad::Tensor> h_fwd(seq_len), h_bwd(seq_len);
    std::vector<unsigned char> active(batch);

    LstmState state{ad::Tensor({batch, units}, 0.0),
                    ad::Tensor({batch, units}, 0.0)};
    for (std::size_t t = 0; t < seq_len; ++t) {
      for (std::size_t b = 0; b < batch; ++b) active[b] = t < lengths[b];
      LstmState next = lstm_cell_step(tape, layer.fwd, xs[t], state);
      state.h = tape.where_rows(active, next.h, state.h);
      state.c = tape.where_rows(active, next.c, state.c);
      h_fwd[t] = state.h;
    }
    final_fwd = state.h;  // frozen per row at its own length

    state = LstmState{ad::Tensor({batch, units}, 0.0),
                      ad::Tensor({batch, units}, 0.0)};
    for (std::size_t t = seq_len; t-- > 0;) {
      for (std::size_t b = 0; b < batch; ++b) active[b] = t < lengths[b];
      LstmState next = lstm_cell_step(tape, layer.bwd, xs[t], state);
      state.h = tape.where_rows(active, next.h, state.h);
      state.c = tape.where_rows(active, next.c, state.c);
      h_bwd[t] = state.h;
    }
    final_bwd = state.h;  // state after reading the sequence reversed

    for (std::size_t t = 0; t < seq_len; ++t) {
      ad::Tensor merged = tape.concat({h_fwd[t], h_bwd[t]}, 1);
      if (dropping && cfg_.lstm_layers[l].dropout > 0.0) {
        merged = tape.dropout(merged, cfg_.lstm_layers[l].dropout,
                              dropout_rng->next_u64(), true);
      }
      xs[t] = merged;
    }
  }

  ad::Tensor rep = tape.concat({final_fwd, final_bwd}, 1);
  if (dropping && cfg_.head_dropout > 0.0) {
    rep = tape.dropout(rep, cfg_.head_dropout, dropout_rng->next_u64(), true);
  }
  MultiHeadLogits logits;
  for (std::size_t h = 0; h < 4; ++h) {
    logits[h] = tape.add(tape.matmul(rep, heads_[h].W), heads_[h].b);
  }
  return logits;
}

std::vector<NamedParam> BiLstmModel::parameters() {
  std::vector<NamedParam> out;
  out.push_back({"embedding", embedding_});
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string base = "lstm" + std::to_string(l);
    append_cell_params(out, base + ".fwd", layers_[l].fwd);
    append_cell_params(out, base + ".bwd", layers_[l].bwd);
  }
  append_heads(out, heads_);
  return out;
}

// ---------------------------------------------------------------------------
// Transformer
// ---------------------------------------------------------------------------

TransformerModel::TransformerModel(ModelConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)) {
  cfg_.arch = Arch::transformer;
  cfg_.embed_dim = cfg_.attention.d_model;
  cfg_.validate();
  Rng rng(seed);
  const std::size_t d = cfg_.attention.d_model;
  token_embedding_ = embedding_init(rng, cfg_.vocab_size, d, true);
  position_embedding_ = embedding_init(rng, cfg_.max_len, d, false);
  for (std::size_t i = 0; i < cfg_.attention.num_blocks; ++i) {
    Block b;
    b.W_q = glorot(rng, d, d, {d, d});
    b.b_q = constant_bias(d, 0.0);
    b.W_k = glorot(rng, d, d, {d, d});
    b.b_k = constant_bias(d, 0.0);
    b.W_v = glorot(rng, d, d, {d, d});
    b.b_v = constant_bias(d, 0.0);
    b.W_o = glorot(rng, d, d, {d, d});
    b.b_o = constant_bias(d, 0.0);
    b.ln1_gain = constant_bias(d, 1.0);
    b.ln1_bias = constant_bias(d, 0.0);
    b.ff_W1 = glorot(rng, d, cfg_.attention.ff_dim, {d, cfg_.attention.ff_dim});
    b.ff_b1 = constant_bias(cfg_.attention.ff_dim, 0.0);
    b.ff_W2 = glorot(rng, cfg_.attention.ff_dim, d, {cfg_.attention.ff_dim, d});
    b.ff_b2 = constant_bias(d, 0.0);
    b.ln2_gain = constant_bias(d, 1.0);
    b.ln2_bias = constant_bias(d, 0.0);
    blocks_.push_back(std::move(b));
  }
  heads_ = init_heads(rng, d, cfg_.head_sizes);
}

void TransformerModel::zero_positional_embedding() {
  std::fill(position_embedding_.data().begin(),
            position_embedding_.data().end(), 0.0);
}

MultiHeadLogits TransformerModel::forward(
    ad::Tape& tape, const std::vector<std::vector<int>>& ids, bool train,
    Rng* dropout_rng) {
  const std::vector<std::size_t> lengths = lengths_of(ids, cfg_.max_len);
  const std::size_t seq_len = ids[0].size();
  const std::size_t d_k = cfg_.attention.d_k;
  const bool dropping = train && dropout_rng != nullptr;

  std::vector<ad::Tensor> pooled;
  pooled.reserve(ids.size());
  ad::Tensor positions = tape.slice(position_embedding_, 0, 0, seq_len);

  for (std::size_t b = 0; b < ids.size(); ++b) {
    // A fully padded sequence still attends to position 0 so the softmax
    // stays well defined.
    const std::size_t visible = std::max<std::size_t>(lengths[b], 1);
    std::vector<unsigned char> key_mask(seq_len);
    for (std::size_t j = 0; j < seq_len; ++j) key_mask[j] = j < visible;

    ad::Tensor x = tape.add(
        tape.embedding_lookup(token_embedding_, ids[b],
                              vocab::Vocabulary::kPad),
        positions);

    for (const Block& blk : blocks_) {
      ad::Tensor q = tape.add(tape.matmul(x, blk.W_q), blk.b_q);
      ad::Tensor k = tape.add(tape.matmul(x, blk.W_k), blk.b_k);
      ad::Tensor v = tape.add(tape.matmul(x, blk.W_v), blk.b_v);
      std::vector<ad::Tensor> head_outputs;
      head_outputs.reserve(cfg_.attention.num_heads);
      for (std::size_t h = 0; h < cfg_.attention.num_heads; ++h) {
        ad::Tensor qh = tape.slice(q, 1, h * d_k, d_k);
        ad::Tensor kh = tape.slice(k, 1, h * d_k, d_k);
        ad::Tensor vh = tape.slice(v, 1, h * d_k, d_k);
        head_outputs.push_back(attention(tape, qh, kh, vh, &key_mask));
      }
      ad::Tensor attended = tape.add(
          tape.matmul(tape.concat(head_outputs, 1), blk.W_o), blk.b_o);
      x = tape.layer_norm(tape.add(x, attended), blk.ln1_gain, blk.ln1_bias);
      ad::Tensor ff = tape.add(
          tape.matmul(tape.relu(tape.add(tape.matmul(x, blk.ff_W1), blk.ff_b1)),
                      blk.ff_W2),
          blk.ff_b2);
      x = tape.layer_norm(tape.add(x, ff), blk.ln2_gain, blk.ln2_bias);
    }

    if (cfg_.pooling == Pooling::first) {
      pooled.push_back(tape.slice(x, 0, 0, 1));
    } else {
      ad::Tensor acc = tape.slice(x, 0, 0, 1);
      for (std::size_t j = 1; j < visible; ++j) {
        acc = tape.add(acc, tape.slice(x, 0, j, 1));
      }
      pooled.push_back(
          tape.affine(acc, 1.0 / static_cast<double>(visible), 0.0));
    }
  }

  ad::Tensor rep = pooled.size() == 1 ? pooled[0] : tape.concat(pooled, 0);
  if (dropping && cfg_.head_dropout > 0.0) {
    rep = tape.dropout(rep, cfg_.head_dropout, dropout_rng->next_u64(), true);
  }
  MultiHeadLogits logits;
  for (std::size_t h = 0; h < 4; ++h) {
    logits[h] = tape.add(tape.matmul(rep, heads_[h].W), heads_[h].b);
  }
  return logits;
}

std::vector<NamedParam> TransformerModel::parameters() {
  std::vector<NamedParam> out;
  out.push_back({"token_embedding", token_embedding_});
  out.push_back({"position_embedding", position_embedding_});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string base = "block" + std::to_string(i);
    Block& b = blocks_[i];
    out.push_back({base + ".W_q", b.W_q});
    out.push_back({base + ".b_q", b.b_q});
    out.push_back({base + ".W_k", b.W_k});
    out.push_back({base + ".b_k", b.b_k});
    out.push_back({base + ".W_v", b.W_v});
    out.push_back({base + ".b_v", b.b_v});
    out.push_back({base + ".W_o", b.W_o});
    out.push_back({base + ".b_o", b.b_o});
    out.push_back({base + ".ln1_gain", b.ln1_gain});
    out.push_back({base + ".ln1_bias", b.ln1_bias});
    out.push_back({base + ".ff_W1", b.ff_W1});
    out.push_back({base + ".ff_b1", b.ff_b1});
    out.push_back({base + ".ff_W2", b.ff_W2});
    out.push_back({base + ".ff_b2", b.ff_b2});
    out.push_back({base + ".ln2_gain", b.ln2_gain});
    out.push_back({base + ".ln2_bias", b.ln2_bias});
  }
  append_heads(out, heads_);
  return out;
}

std::unique_ptr<Model> make_model(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.arch == Arch::bilstm) {
    return std::make_unique<BiLstmModel>(cfg, seed);
  }
  return std::make_unique<TransformerModel>(cfg, seed);
}

}  // namespace prodcat::models
