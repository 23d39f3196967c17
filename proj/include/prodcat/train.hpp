#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "prodcat/checkpoint.hpp"
#include "prodcat/corpus.hpp"
#include "prodcat/losses.hpp"
#include "prodcat/metrics.hpp"
#include "prodcat/models.hpp"

namespace prodcat::train {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool adamw = false;        // decoupled weight decay applied before the step
  double weight_decay = 0.01;  // used by AdamW only
};

// Adam / AdamW over a fixed parameter list. step() applies, per parameter:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
// with bias-corrected m_hat, v_hat; AdamW first shrinks p by lr*wd*p.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<models::NamedParam> params, AdamConfig cfg);

  void step();       // throws NumericalError naming the parameter on bad grads
  void zero_grad();
  std::uint64_t step_count() const { return t_; }

 private:
  struct Slot {
    models::NamedParam param;
    std::vector<double> m;
    std::vector<double> v;
  };
  std::vector<Slot> slots_;
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
};

// Maximizing early stop: remembers the first epoch achieving the best metric
// and asks to stop once `patience` epochs pass without improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  // One call per epoch, in order; returns true when training should stop.
  bool observe(double metric);
  bool improved_last() const { return improved_last_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_metric() const { return best_metric_; }
  std::size_t epochs_seen() const { return epoch_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  double best_metric_ = -1.0;
  bool improved_last_ = false;
};

enum class LossKind { ce, focal };

struct TrainConfig {
  double lr = 1e-5;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 50;
  std::size_t patience = 3;
  std::uint64_t seed = 42;
  LossKind loss = LossKind::focal;
  losses::FocalLossConfig focal = losses::FocalLossConfig::bilstm_defaults();
  AdamConfig adam{};
  std::size_t max_words = 42000;
  bool freeze_embeddings = false;
  bool retrain_with_val = false;

  static TrainConfig defaults_for(models::Arch arch);
};

struct HistoryRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_macro_f1_mean = 0.0;
  std::array<double, 4> head_f1{};  // segment..product
};

std::string history_csv(const std::vector<HistoryRow>& history);

struct TrainResult {
  Checkpoint checkpoint;  // best epoch by validation metric, earliest on ties
  std::vector<HistoryRow> history;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
  bool diverged = false;
};

// Builds vocabulary and label space from the train split only, then runs
// seeded mini-batch training with per-epoch validation and early stopping.
TrainResult fit(const models::ModelConfig& arch_cfg, const TrainConfig& cfg,
                const corpus::Corpus& train_corpus,
                const corpus::Corpus& val_corpus,
                const textnorm::NormalizerConfig& norm_cfg,
                const embedding::EmbeddingTable* pretrained = nullptr);

struct EvalOutcome {
  metrics::EvalReport report;
  // argmax predictions and true ids per head, for cross-checks
  std::array<std::vector<int>, 4> y_true;
  std::array<std::vector<int>, 4> y_pred;
};

// Greedy argmax per head with dropout disabled. Records whose labels are
// outside the checkpoint's label space are skipped and counted.
EvalOutcome evaluate(const Checkpoint& ckpt, const corpus::Corpus& data,
                     std::size_t batch_size = 64);

struct Prediction {
  std::array<std::string, 4> labels;
  std::array<double, 4> probabilities;
};

// normalize -> encode -> forward -> per-head argmax; nullopt when the text
// normalizes to nothing (unclassifiable).
std::optional<Prediction> predict(const Checkpoint& ckpt,
                                  const std::string& raw_text);

}  // namespace prodcat::train
