#include "prodcat/losses.hpp"

#include "prodcat/util.hpp"

namespace prodcat::losses {

namespace {

// Shared tail of both losses: pick the true-class probability per row and
// clamp it away from 0 and 1.
ad::Tensor clamped_true_prob(ad::Tape& tape, const ad::Tensor& probs,
                             const std::vector<int>& targets) {
  ad::Tensor pt = tape.select_index(probs, targets);
  return tape.clamp(pt, kProbClamp, 1.0 - kProbClamp);
}

}  // namespace

ad::Tensor cross_entropy(ad::Tape& tape, const ad::Tensor& logits,
                         const std::vector<int>& targets) {
  ad::Tensor probs = tape.softmax(logits, 1);
  ad::Tensor pt = clamped_true_prob(tape, probs, targets);
  ad::Tensor nll = tape.affine(tape.log(pt), -1.0, 0.0);
  return tape.reduce_mean(nll);
}

ad::Tensor focal_loss(ad::Tape& tape, const ad::Tensor& input,
                      const std::vector<int>& targets,
                      const FocalLossConfig& cfg, int head) {
  if (head < 0 || head >= 4) throw DataError("focal_loss: head out of range");
  const double gamma = cfg.gamma_per_head[static_cast<std::size_t>(head)];
  if (gamma < 0) throw DataError("focal_loss: gamma must be >= 0");

  ad::Tensor probs = cfg.from_logits ? tape.softmax(input, 1) : input;
  ad::Tensor pt = clamped_true_prob(tape, probs, targets);
  ad::Tensor damping = tape.pow_const(tape.affine(pt, -1.0, 1.0), gamma);
  ad::Tensor weighted = tape.mul(damping, tape.log(pt));
  return tape.reduce_mean(tape.affine(weighted, -cfg.alpha, 0.0));
}

ad::Tensor multi_head_loss(ad::Tape& tape,
                           const std::array<ad::Tensor, 4>& logits,
                           const std::array<std::vector<int>, 4>& targets,
                           const FocalLossConfig& cfg, bool use_focal) {
  ad::Tensor total;
  for (int head = 0; head < 4; ++head) {
    const std::size_t h = static_cast<std::size_t>(head);
    ad::Tensor part =
        use_focal ? focal_loss(tape, logits[h], targets[h], cfg, head)
                  : cross_entropy(tape, logits[h], targets[h]);
    total = total.defined() ? tape.add(total, part) : part;
  }
  return total;
}

}  // namespace prodcat::losses
