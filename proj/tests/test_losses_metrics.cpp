#include <doctest.h>

#include <cmath>

#include "prodcat/losses.hpp"
#include "prodcat/metrics.hpp"
#include "prodcat/tensor.hpp"
#include "prodcat/util.hpp"

using namespace prodcat;
using ad::Tape;
using ad::Tensor;

namespace {

Tensor random_logits(Rng& rng, std::size_t rows, std::size_t cols,
                     double range = 5.0) {
  std::vector<double> values(rows * cols);
  for (double& v : values) v = rng.uniform(-range, range);
  return Tensor::from({rows, cols}, std::move(values));
}

std::vector<int> random_targets(Rng& rng, std::size_t rows, std::size_t cols) {
  std::vector<int> t(rows);
  for (int& v : t) v = static_cast<int>(rng.below(cols));
  return t;
}

// Independent scalar evaluation of the focal formula
// -alpha * (1 - p)^gamma * log(p).
double focal_formula(double p, double gamma, double alpha) {
  return -alpha * std::pow(1.0 - p, gamma) * std::log(p);
}

// Brute-force confusion counting: one full scan of the arrays per class and
// per quantity, structured nothing like the implementation.
double f1_macro_oracle(const std::vector<int>& y_true,
                       const std::vector<int>& y_pred, int n_classes) {
  double f1_sum = 0.0;
  for (int c = 0; c < n_classes; ++c) {
    int tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      if (y_pred[i] == c && y_true[i] == c) ++tp;
    }
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      if (y_pred[i] == c && y_true[i] != c) ++fp;
    }
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      if (y_true[i] == c && y_pred[i] != c) ++fn;
    }
    double precision = tp + fp > 0 ? double(tp) / (tp + fp) : 0.0;
    double recall = tp + fn > 0 ? double(tp) / (tp + fn) : 0.0;
    double f1 = precision + recall > 0
                    ? 2.0 * precision * recall / (precision + recall)
                    : 0.0;
    f1_sum += f1;
  }
  return f1_sum / n_classes;
}

}  // namespace

TEST_CASE("cross_entropy examples") {
  Tape tape(false);
  CHECK(losses::cross_entropy(tape, Tensor::from({1, 2}, {0.0, 0.0}), {0})
            .item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // direct stable formula: log(1 + exp(-20))
  const double expected = std::log1p(std::exp(-20.0));
  double got = losses::cross_entropy(tape, Tensor::from({1, 2}, {10.0, -10.0}),
                                     {0})
                   .item();
  CHECK(std::abs(got - expected) <= 1e-12);
  CHECK(got == doctest::Approx(2.0611536e-9).epsilon(1e-3));

  // one-hot-perfect limit
  CHECK(losses::cross_entropy(tape, Tensor::from({1, 2}, {60.0, 0.0}), {0})
            .item() <= 1e-12);

  // batched mean
  Tensor batch = Tensor::from({2, 2}, {0.0, 0.0, 60.0, 0.0});
  CHECK(losses::cross_entropy(tape, batch, {0, 0}).item() ==
        doctest::Approx(std::log(2.0) / 2.0).epsilon(1e-12));

  CHECK_THROWS_AS(
      losses::cross_entropy(tape, Tensor::from({1, 2}, {0.0, 0.0}), {2}),
      DataError);
}

TEST_CASE("focal loss spot values against the direct formula") {
  Tape tape(false);
  losses::FocalLossConfig cfg;
  cfg.from_logits = true;

  // p_t = 0.5 exactly via equal logits
  cfg.alpha = 1.0;
  cfg.gamma_per_head = {2.0, 2.0, 2.0, 2.0};
  double got = losses::focal_loss(tape, Tensor::from({1, 2}, {3.0, 3.0}), {0},
                                  cfg, 0)
                   .item();
  CHECK(std::abs(got - focal_formula(0.5, 2.0, 1.0)) <= 1e-6);
  CHECK(got == doctest::Approx(0.1733).epsilon(1e-3));

  // p_t = 0.9 via logits (ln 9, 0)
  cfg.alpha = 0.25;
  got = losses::focal_loss(tape, Tensor::from({1, 2}, {std::log(9.0), 0.0}),
                           {0}, cfg, 0)
            .item();
  CHECK(std::abs(got - focal_formula(0.9, 2.0, 0.25)) <= 1e-6);
  CHECK(got == doctest::Approx(2.634e-4).epsilon(1e-3));
}

TEST_CASE("focal with gamma=0, alpha=1 equals cross-entropy to 1e-12") {
  Rng rng(808);
  losses::FocalLossConfig cfg;
  cfg.gamma_per_head = {0.0, 0.0, 0.0, 0.0};
  cfg.alpha = 1.0;
  cfg.from_logits = true;
  Tape tape(false);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t cols = 2 + rng.below(9);
    Tensor logits = random_logits(rng, 3, cols);
    std::vector<int> targets = random_targets(rng, 3, cols);
    double fl = losses::focal_loss(tape, logits, targets, cfg, 0).item();
    double ce = losses::cross_entropy(tape, logits, targets).item();
    CHECK(std::abs(fl - ce) <= 1e-12);
  }
}

TEST_CASE("focal loss decreases strictly in gamma for fixed p < 1") {
  Tape tape(false);
  losses::FocalLossConfig cfg;
  cfg.alpha = 1.0;
  cfg.from_logits = true;
  Tensor logits = Tensor::from({1, 2}, {1.0, 0.0});  // p ~ 0.731
  double prev = 1e100;
  for (double gamma : {0.0, 0.5, 1.0, 2.0, 3.0, 5.0}) {
    cfg.gamma_per_head = {gamma, gamma, gamma, gamma};
    double loss = losses::focal_loss(tape, logits, {0}, cfg, 0).item();
    CHECK(loss < prev);
    prev = loss;
  }
}

TEST_CASE("focal loss is non-negative") {
  Rng rng(555);
  Tape tape(false);
  losses::FocalLossConfig cfg;
  cfg.from_logits = true;
  for (int trial = 0; trial < 200; ++trial) {
    cfg.alpha = rng.uniform(0.05, 1.0);
    double gamma = rng.uniform(0.0, 4.0);
    cfg.gamma_per_head = {gamma, gamma, gamma, gamma};
    Tensor logits = random_logits(rng, 2, 4, 30.0);
    double loss =
        losses::focal_loss(tape, logits, random_targets(rng, 2, 4), cfg, 0)
            .item();
    CHECK(loss >= 0.0);
  }
}

TEST_CASE("focal accepts probability input when from_logits=false") {
  Tape tape(false);
  losses::FocalLossConfig cfg;  // from_logits = false
  cfg.alpha = 1.0;
  cfg.gamma_per_head = {2.0, 2.0, 2.0, 2.0};
  Tensor probs = Tensor::from({1, 2}, {0.5, 0.5});
  double got = losses::focal_loss(tape, probs, {0}, cfg, 0).item();
  CHECK(std::abs(got - focal_formula(0.5, 2.0, 1.0)) <= 1e-12);
}

TEST_CASE("multi_head_loss is the unweighted sum of the head losses") {
  Rng rng(99);
  losses::FocalLossConfig cfg = losses::FocalLossConfig::transformer_defaults();
  cfg.from_logits = true;
  std::array<Tensor, 4> logits;
  std::array<std::vector<int>, 4> targets;
  std::array<std::size_t, 4> sizes = {3, 6, 9, 12};
  for (std::size_t h = 0; h < 4; ++h) {
    logits[h] = random_logits(rng, 5, sizes[h]);
    targets[h] = random_targets(rng, 5, sizes[h]);
  }
  Tape tape(false);
  double total =
      losses::multi_head_loss(tape, logits, targets, cfg, true).item();
  double sum = 0.0;
  for (int h = 0; h < 4; ++h) {
    sum += losses::focal_loss(tape, logits[static_cast<std::size_t>(h)],
                              targets[static_cast<std::size_t>(h)], cfg, h)
               .item();
  }
  CHECK(std::abs(total - sum) <= 1e-12);

  // zeroing one head's logits moves the total by exactly that head's delta
  double head2_before =
      losses::focal_loss(tape, logits[2], targets[2], cfg, 2).item();
  logits[2] = Tensor({5, sizes[2]}, 0.0);
  double head2_after =
      losses::focal_loss(tape, logits[2], targets[2], cfg, 2).item();
  double total_after =
      losses::multi_head_loss(tape, logits, targets, cfg, true).item();
  CHECK(std::abs((total_after - total) - (head2_after - head2_before)) <=
        1e-12);

  // all heads perfect -> loss at the clamp floor
  for (std::size_t h = 0; h < 4; ++h) {
    std::vector<double> v(sizes[h], 0.0);
    v[0] = 80.0;
    logits[h] = Tensor::from({1, sizes[h]}, std::move(v));
    targets[h] = {0};
  }
  CHECK(losses::multi_head_loss(tape, logits, targets, cfg, true).item() <=
        1e-9);
}

TEST_CASE("focal loss gradient passes gradient_check") {
  Rng rng(123);
  losses::FocalLossConfig cfg;
  cfg.alpha = 0.25;
  cfg.gamma_per_head = {2.0, 1.0, 1.0, 2.0};
  cfg.from_logits = true;
  std::vector<int> targets = {1, 0, 3};
  // gamma damps some gradient components to ~1e-5, where cancellation noise
  // at eps=1e-5 costs ~1e-6 relative; eps=1e-4 keeps the check sharp
  double err = ad::gradient_check(
      [&](Tape& tape, std::vector<Tensor>& leaves) {
        return losses::focal_loss(tape, leaves[0], targets, cfg, 0);
      },
      {random_logits(rng, 3, 4)}, 1e-4);
  CHECK(err <= 1e-6);

  err = ad::gradient_check(
      [&](Tape& tape, std::vector<Tensor>& leaves) {
        return losses::cross_entropy(tape, leaves[0], targets);
      },
      {random_logits(rng, 3, 4)}, 1e-4);
  CHECK(err <= 1e-6);
}

TEST_CASE("precision/recall per class hand case") {
  // true = [A,A,B,B], pred = [A,B,B,B] with A=0, B=1
  std::vector<metrics::ClassStats> stats =
      metrics::precision_recall_per_class({0, 0, 1, 1}, {0, 1, 1, 1}, 2);
  CHECK(stats[0].precision == doctest::Approx(1.0));
  CHECK(stats[0].recall == doctest::Approx(0.5));
  CHECK(stats[1].precision == doctest::Approx(2.0 / 3.0));
  CHECK(stats[1].recall == doctest::Approx(1.0));
  CHECK(stats[0].support == 2);
  CHECK(stats[1].support == 2);
}

TEST_CASE("perfect predictions give all ones") {
  std::vector<metrics::ClassStats> stats =
      metrics::precision_recall_per_class({0, 1, 2}, {0, 1, 2}, 3);
  for (const auto& s : stats) {
    CHECK(s.precision == 1.0);
    CHECK(s.recall == 1.0);
    CHECK(s.f1 == 1.0);
  }
  CHECK(metrics::f1_macro({0, 1, 2}, {0, 1, 2}, 3) == doctest::Approx(1.0));
}

TEST_CASE("class never predicted and never true gets zeros") {
  std::vector<metrics::ClassStats> stats =
      metrics::precision_recall_per_class({0, 0}, {0, 0}, 3);
  CHECK(stats[2].precision == 0.0);
  CHECK(stats[2].recall == 0.0);
  CHECK(stats[2].f1 == 0.0);
  CHECK(stats[2].support == 0);
}

TEST_CASE("f1_macro hand case: 11/15") {
  double f1 = metrics::f1_macro({0, 0, 1, 1}, {0, 1, 1, 1}, 2);
  CHECK(std::abs(f1 - (2.0 / 3.0 + 4.0 / 5.0) / 2.0) <= 1e-9);
  CHECK(f1 == doctest::Approx(0.733333333).epsilon(1e-8));
}

TEST_CASE("f1_macro equals the brute-force oracle exactly") {
  Rng rng(20240101);
  for (int trial = 0; trial < 200; ++trial) {
    const int n_classes = 2 + static_cast<int>(rng.below(9));
    const std::size_t n = 1 + rng.below(50);
    std::vector<int> y_true(n), y_pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      y_true[i] = static_cast<int>(rng.below(n_classes));
      y_pred[i] = static_cast<int>(rng.below(n_classes));
    }
    double impl = metrics::f1_macro(y_true, y_pred, n_classes);
    double oracle = f1_macro_oracle(y_true, y_pred, n_classes);
    CHECK(std::abs(impl - oracle) <= 1e-12);
  }
}

TEST_CASE("all predictions a single wrong class, scored by the oracle") {
  std::vector<int> y_true = {0, 1, 2, 0, 1, 2};
  std::vector<int> y_pred(y_true.size(), 1);
  double impl = metrics::f1_macro(y_true, y_pred, 3);
  CHECK(std::abs(impl - f1_macro_oracle(y_true, y_pred, 3)) <= 1e-12);
}

TEST_CASE("f1_macro is invariant under consistent relabeling") {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const int n_classes = 2 + static_cast<int>(rng.below(6));
    const std::size_t n = 5 + rng.below(40);
    std::vector<int> y_true(n), y_pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      y_true[i] = static_cast<int>(rng.below(n_classes));
      y_pred[i] = static_cast<int>(rng.below(n_classes));
    }
    std::vector<int> perm(static_cast<std::size_t>(n_classes));
    for (int c = 0; c < n_classes; ++c) perm[static_cast<std::size_t>(c)] = c;
    rng.shuffle(perm);
    std::vector<int> t2(n), p2(n);
    for (std::size_t i = 0; i < n; ++i) {
      t2[i] = perm[static_cast<std::size_t>(y_true[i])];
      p2[i] = perm[static_cast<std::size_t>(y_pred[i])];
    }
    CHECK(std::abs(metrics::f1_macro(y_true, y_pred, n_classes) -
                   metrics::f1_macro(t2, p2, n_classes)) <= 1e-12);
  }
}

TEST_CASE("metrics validate label ranges") {
  CHECK_THROWS_AS(metrics::f1_macro({0, 3}, {0, 0}, 3), DataError);
  CHECK_THROWS_AS(metrics::f1_macro({0}, {0, 1}, 2), DataError);
}

TEST_CASE("eval report json has stable shape") {
  corpus::LabelSpace space;
  for (int l = 0; l < 4; ++l) {
    space.labels[static_cast<std::size_t>(l)] = {"A", "B"};
    space.index[static_cast<std::size_t>(l)] = {{"A", 0}, {"B", 1}};
  }
  metrics::EvalReport report;
  for (std::size_t h = 0; h < 4; ++h) {
    report.heads[h] = metrics::head_report({0, 1}, {0, 1}, 2);
  }
  report.macro_f1_mean = 1.0;
  report.evaluated = 2;
  std::string a = metrics::to_json(report, space);
  std::string b = metrics::to_json(report, space);
  CHECK(a == b);
  CHECK(a.find("\"macro_f1_mean\"") != std::string::npos);
  CHECK(a.find("\"segment\"") != std::string::npos);
  CHECK(a.find("\"product\"") != std::string::npos);
}
