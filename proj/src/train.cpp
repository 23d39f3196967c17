#include "prodcat/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace prodcat::train {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct EncodedCorpus {
  std::vector<std::vector<int>> ids;
  std::array<std::vector<int>, 4> labels;
  std::size_t skipped_unseen = 0;
};

EncodedCorpus encode_corpus(const corpus::Corpus& data,
                            const vocab::Vocabulary& vocab,
                            const corpus::LabelSpace& space,
                            std::size_t max_len) {
  EncodedCorpus out;
  out.ids.reserve(data.size());
  for (const corpus::LabeledRecord& rec : data.records) {
    std::array<int, 4> label_ids{};
    bool unseen = false;
    for (int l = 0; l < 4; ++l) {
      label_ids[static_cast<std::size_t>(l)] = space.id(
          static_cast<corpus::Level>(l), rec.labels[static_cast<std::size_t>(l)]);
      unseen = unseen || label_ids[static_cast<std::size_t>(l)] < 0;
    }
    if (unseen) {
      ++out.skipped_unseen;
      continue;
    }
    out.ids.push_back(vocab::encode(rec.item_text, vocab, max_len).ids);
    for (int l = 0; l < 4; ++l) {
      out.labels[static_cast<std::size_t>(l)].push_back(
          label_ids[static_cast<std::size_t>(l)]);
    }
  }
  return out;
}

std::array<std::vector<int>, 4> argmax_heads(
    const models::MultiHeadLogits& logits) {
  std::array<std::vector<int>, 4> picks;
  for (std::size_t h = 0; h < 4; ++h) {
    const ad::Tensor& t = logits[h];
    const std::size_t rows = t.dim(0), cols = t.dim(1);
    picks[h].resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < cols; ++c) {
        if (t.at(r, c) > t.at(r, best)) best = c;
      }
      picks[h][r] = static_cast<int>(best);
    }
  }
  return picks;
}

// Forward the whole set batch by batch with dropout off and return argmax
// predictions per head.
std::array<std::vector<int>, 4> predict_all(models::Model& model,
                                            const EncodedCorpus& data,
                                            std::size_t batch_size) {
  std::array<std::vector<int>, 4> preds;
  for (std::size_t start = 0; start < data.ids.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, data.ids.size());
    std::vector<std::vector<int>> batch(data.ids.begin() + start,
                                        data.ids.begin() + end);
    ad::Tape tape(false);
    models::MultiHeadLogits logits = model.forward(tape, batch, false, nullptr);
    std::array<std::vector<int>, 4> picks = argmax_heads(logits);
    for (std::size_t h = 0; h < 4; ++h) {
      preds[h].insert(preds[h].end(), picks[h].begin(), picks[h].end());
    }
  }
  return preds;
}

double mean_macro_f1(const EncodedCorpus& data,
                     const std::array<std::vector<int>, 4>& preds,
                     const std::array<std::size_t, 4>& head_sizes,
                     std::array<double, 4>* per_head) {
  double sum = 0.0;
  for (std::size_t h = 0; h < 4; ++h) {
    double f1 = metrics::f1_macro(data.labels[h], preds[h],
                                  static_cast<int>(head_sizes[h]));
    if (per_head) (*per_head)[h] = f1;
    sum += f1;
  }
  return sum / 4.0;
}

}  // namespace

AdamOptimizer::AdamOptimizer(std::vector<models::NamedParam> params,
                             AdamConfig cfg)
    : cfg_(cfg) {
  slots_.reserve(params.size());
  for (models::NamedParam& p : params) {
    Slot slot;
    slot.m.assign(p.tensor.size(), 0.0);
    slot.v.assign(p.tensor.size(), 0.0);
    slot.param = std::move(p);
    slots_.push_back(std::move(slot));
  }
}

void AdamOptimizer::step() {
  ++t_;
  const double bias1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Slot& slot : slots_) {
    ad::Tensor& p = slot.param.tensor;
    const std::vector<double>& g = p.grad();
    for (double gv : g) {
      if (!std::isfinite(gv)) {
        throw NumericalError("non-finite gradient in parameter " +
                             slot.param.name);
      }
    }
    std::vector<double>& values = p.data();
    if (cfg_.adamw && cfg_.weight_decay != 0.0) {
      for (double& v : values) v -= cfg_.lr * cfg_.weight_decay * v;
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      slot.m[i] = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * g[i];
      slot.v[i] = cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double m_hat = slot.m[i] / bias1;
      const double v_hat = slot.v[i] / bias2;
      values[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
}

void AdamOptimizer::zero_grad() {
  for (Slot& slot : slots_) slot.param.tensor.zero_grad();
}

bool EarlyStopper::observe(double metric) {
  ++epoch_;
  improved_last_ = metric > best_metric_;
  if (improved_last_) {
    best_metric_ = metric;
    best_epoch_ = epoch_;
  }
  return epoch_ - best_epoch_ >= patience_;
}

TrainConfig TrainConfig::defaults_for(models::Arch arch) {
  TrainConfig cfg;
  if (arch == models::Arch::bilstm) {
    cfg.lr = 1e-5;
    cfg.batch_size = 64;
    cfg.max_epochs = 50;
    cfg.patience = 3;
    cfg.focal = losses::FocalLossConfig::bilstm_defaults();
    cfg.adam.adamw = false;
  } else {
    cfg.lr = 5e-5;
    cfg.batch_size = 32;
    cfg.max_epochs = 40;
    cfg.patience = 10;
    cfg.focal = losses::FocalLossConfig::transformer_defaults();
    cfg.adam.adamw = true;
    cfg.adam.weight_decay = 0.01;
  }
  cfg.adam.lr = cfg.lr;
  return cfg;
}

std::string history_csv(const std::vector<HistoryRow>& history) {
  std::string out =
      "epoch,train_loss,val_macro_f1_mean,seg_f1,cat_f1,sub_f1,prod_f1\n";
  for (const HistoryRow& row : history) {
    out += std::to_string(row.epoch);
    out += ',';
    out += format_double(row.train_loss);
    out += ',';
    out += format_double(row.val_macro_f1_mean);
    for (double f1 : row.head_f1) {
      out += ',';
      out += format_double(f1);
    }
    out += '\n';
  }
  return out;
}

TrainResult fit(const models::ModelConfig& arch_cfg, const TrainConfig& cfg,
                const corpus::Corpus& train_corpus,
                const corpus::Corpus& val_corpus,
                const textnorm::NormalizerConfig& norm_cfg,
                const embedding::EmbeddingTable* pretrained) {
  if (train_corpus.empty()) throw DataError("train split is empty");
  if (val_corpus.empty()) throw DataError("validation split is empty");

  // Vocabulary and label space come from the train split only; validation
  // records only ever feed the metric.
  std::vector<std::string> train_texts;
  train_texts.reserve(train_corpus.size());
  for (const corpus::LabeledRecord& rec : train_corpus.records) {
    train_texts.push_back(rec.item_text);
  }
  vocab::Vocabulary vocabulary =
      vocab::Vocabulary::build(train_texts, cfg.max_words);
  corpus::LabelSpace space = corpus::label_space(train_corpus);

  // Provenance guard: every vocabulary token must originate in the train
  // split. Catches any future change that leaks val/test text into the
  // vocabulary build.
  {
    std::unordered_set<std::string> train_tokens;
    for (const std::string& text : train_texts) {
      for (std::string& tok : vocab::tokenize(text)) {
        train_tokens.insert(std::move(tok));
      }
    }
    for (const std::string& tok : vocabulary.tokens()) {
      if (!train_tokens.count(tok)) {
        throw DataError("vocabulary token '" + tok +
                        "' does not come from the train split");
      }
    }
  }

  models::ModelConfig model_cfg = arch_cfg;
  model_cfg.vocab_size = vocabulary.size();
  for (std::size_t l = 0; l < 4; ++l) {
    model_cfg.head_sizes[l] = space.size(static_cast<corpus::Level>(l));
  }
  if (model_cfg.arch == models::Arch::transformer) {
    model_cfg.embed_dim = model_cfg.attention.d_model;
  }

  std::unique_ptr<models::Model> model =
      models::make_model(model_cfg, cfg.seed);
  if (pretrained) {
    if (model_cfg.arch != models::Arch::bilstm) {
      throw DataError("pre-trained embeddings only apply to the bilstm");
    }
    embedding::EmbeddingMatrix matrix =
        embedding::build_matrix(*pretrained, vocabulary, cfg.seed);
    static_cast<models::BiLstmModel&>(*model).set_embedding(matrix);
  }
  if (cfg.freeze_embeddings && model_cfg.arch == models::Arch::bilstm) {
    static_cast<models::BiLstmModel&>(*model).freeze_embedding();
  }

  EncodedCorpus train_data =
      encode_corpus(train_corpus, vocabulary, space, model_cfg.max_len);
  EncodedCorpus val_data =
      encode_corpus(val_corpus, vocabulary, space, model_cfg.max_len);
  if (train_data.ids.empty()) throw DataError("no usable training records");
  if (val_data.ids.empty()) {
    throw DataError("no validation records fall inside the label space");
  }

  AdamConfig adam_cfg = cfg.adam;
  adam_cfg.lr = cfg.lr;
  // Frozen tensors stay out of the optimizer but remain in checkpoints.
  std::vector<models::NamedParam> trainable;
  for (models::NamedParam& p : model->parameters()) {
    if (p.tensor.requires_grad()) trainable.push_back(std::move(p));
  }
  AdamOptimizer optimizer(std::move(trainable), adam_cfg);
  optimizer.zero_grad();

  losses::FocalLossConfig focal_cfg = cfg.focal;
  focal_cfg.from_logits = true;  // heads emit logits

  Rng dropout_rng(cfg.seed * 0x9E3779B97F4A7C15ull + 1);

  TrainResult result;
  EarlyStopper stopper(cfg.patience);
  // Last-good fallback: if training diverges before any validation pass,
  // the initial parameters are what we keep.
  std::vector<std::pair<std::string, std::vector<float>>> best_params =
      snapshot_params(*model);

  std::vector<std::size_t> order(train_data.ids.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(cfg.seed + epoch);
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    bool diverged = false;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, order.size());
      std::vector<std::vector<int>> batch_ids;
      batch_ids.reserve(end - start);
      std::array<std::vector<int>, 4> batch_labels;
      for (std::size_t i = start; i < end; ++i) {
        batch_ids.push_back(train_data.ids[order[i]]);
        for (std::size_t h = 0; h < 4; ++h) {
          batch_labels[h].push_back(train_data.labels[h][order[i]]);
        }
      }

      ad::Tape tape;
      ad::Tensor loss;
      double loss_value = 0.0;
      try {
        models::MultiHeadLogits logits =
            model->forward(tape, batch_ids, true, &dropout_rng);
        loss = losses::multi_head_loss(tape, logits, batch_labels, focal_cfg,
                                       cfg.loss == LossKind::focal);
        loss_value = loss.item();
      } catch (const NumericalError&) {
        // non-finite values inside the forward pass are divergence too
        diverged = true;
        break;
      }
      if (!std::isfinite(loss_value)) {
        diverged = true;
        break;
      }
      tape.backward(loss);
      optimizer.step();
      optimizer.zero_grad();
      loss_sum += loss_value;
      ++batches;
    }
    if (diverged) {
      result.diverged = true;
      break;
    }

    HistoryRow row;
    row.epoch = epoch;
    row.train_loss = batches == 0 ? 0.0 : loss_sum / static_cast<double>(batches);
    std::array<std::vector<int>, 4> val_preds =
        predict_all(*model, val_data, cfg.batch_size);
    row.val_macro_f1_mean = mean_macro_f1(val_data, val_preds,
                                          model_cfg.head_sizes, &row.head_f1);
    result.history.push_back(row);

    const bool stop = stopper.observe(row.val_macro_f1_mean);
    if (stopper.improved_last()) {
      best_params = snapshot_params(*model);
    }
    if (stop) break;
  }

  result.best_epoch = stopper.best_epoch();
  result.best_metric = stopper.best_metric();
  result.checkpoint.config = model_cfg;
  result.checkpoint.norm = norm_cfg;
  result.checkpoint.labels = space;
  result.checkpoint.vocab_tokens = vocabulary.tokens();
  result.checkpoint.seed = cfg.seed;
  result.checkpoint.params = std::move(best_params);
  return result;
}

EvalOutcome evaluate(const Checkpoint& ckpt, const corpus::Corpus& data,
                     std::size_t batch_size) {
  std::unique_ptr<models::Model> model = restore_model(ckpt);
  vocab::Vocabulary vocabulary = ckpt.vocabulary();
  EncodedCorpus enc =
      encode_corpus(data, vocabulary, ckpt.labels, ckpt.config.max_len);
  if (enc.ids.empty()) {
    throw DataError("no evaluable records: all labels outside label space");
  }
  EvalOutcome out;
  out.y_pred = predict_all(*model, enc, batch_size);
  out.y_true = enc.labels;
  out.report.evaluated = enc.ids.size();
  out.report.skipped_unseen = enc.skipped_unseen;
  double sum = 0.0;
  for (std::size_t h = 0; h < 4; ++h) {
    out.report.heads[h] = metrics::head_report(
        out.y_true[h], out.y_pred[h],
        static_cast<int>(ckpt.config.head_sizes[h]));
    sum += out.report.heads[h].macro_f1;
  }
  out.report.macro_f1_mean = sum / 4.0;
  return out;
}

std::optional<Prediction> predict(const Checkpoint& ckpt,
                                  const std::string& raw_text) {
  textnorm::Normalizer normalizer(ckpt.norm);
  const std::string normalized = normalizer.normalize(raw_text);
  if (normalized.empty()) return std::nullopt;

  std::unique_ptr<models::Model> model = restore_model(ckpt);
  vocab::Vocabulary vocabulary = ckpt.vocabulary();
  vocab::EncodedSequence seq =
      vocab::encode(normalized, vocabulary, ckpt.config.max_len);

  ad::Tape tape(false);
  models::MultiHeadLogits logits = model->forward(tape, {seq.ids}, false,
                                                  nullptr);
  Prediction pred;
  for (std::size_t h = 0; h < 4; ++h) {
    const ad::Tensor& t = logits[h];
    const std::size_t cols = t.dim(1);
    std::size_t best = 0;
    double mx = t.at(0, 0);
    for (std::size_t c = 1; c < cols; ++c) {
      if (t.at(0, c) > mx) {
        mx = t.at(0, c);
        best = c;
      }
    }
    double denom = 0.0;
    for (std::size_t c = 0; c < cols; ++c) denom += std::exp(t.at(0, c) - mx);
    pred.labels[h] = ckpt.labels.labels[h][best];
    pred.probabilities[h] = 1.0 / denom;  // exp(0)/sum
  }
  return pred;
}

}  // namespace prodcat::train
