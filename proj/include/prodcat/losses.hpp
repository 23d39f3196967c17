#pragma once

#include <array>
#include <vector>

#include "prodcat/tensor.hpp"

namespace prodcat::losses {

// Per-head focal exponents in hierarchy order (segment..product) plus the
// uniform balance factor. from_logits=false treats the input rows as
// probabilities (softmax already applied), matching the configuration the
// defaults were taken from; the trainer passes logits and sets it to true.
struct FocalLossConfig {
  std::array<double, 4> gamma_per_head{2.0, 2.0, 2.0, 2.0};
  double alpha = 0.25;
  bool from_logits = false;

  static FocalLossConfig bilstm_defaults() {
    return FocalLossConfig{{2.0, 2.0, 2.0, 2.0}, 0.25, false};
  }
  static FocalLossConfig transformer_defaults() {
    return FocalLossConfig{{2.0, 1.0, 1.0, 2.0}, 1.0, false};
  }
};

inline constexpr double kProbClamp = 1e-12;

// Mean over the batch of -log softmax(logits)[target].
ad::Tensor cross_entropy(ad::Tape& tape, const ad::Tensor& logits,
                         const std::vector<int>& targets);

// Mean over the batch of -alpha * (1 - p_t)^gamma * log(p_t), with p_t
// clamped to [1e-12, 1 - 1e-12].
ad::Tensor focal_loss(ad::Tape& tape, const ad::Tensor& input,
                      const std::vector<int>& targets,
                      const FocalLossConfig& cfg, int head);

// Unweighted sum of the four per-head losses, each with its own gamma.
ad::Tensor multi_head_loss(ad::Tape& tape,
                           const std::array<ad::Tensor, 4>& logits,
                           const std::array<std::vector<int>, 4>& targets,
                           const FocalLossConfig& cfg, bool use_focal);

}  // namespace prodcat::losses
