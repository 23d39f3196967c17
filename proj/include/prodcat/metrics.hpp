#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "prodcat/corpus.hpp"

namespace prodcat::metrics {

struct ClassStats {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

// Per-class precision and recall with the zero-denominator -> 0 convention.
std::vector<ClassStats> precision_recall_per_class(
    const std::vector<int>& y_true, const std::vector<int>& y_pred,
    int n_classes);

// Mean per-class F1 over ALL n_classes, weighting every class equally.
double f1_macro(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                int n_classes);

struct HeadReport {
  std::vector<ClassStats> per_class;
  double macro_f1 = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][pred]
};

HeadReport head_report(const std::vector<int>& y_true,
                       const std::vector<int>& y_pred, int n_classes);

struct EvalReport {
  std::array<HeadReport, 4> heads;
  double macro_f1_mean = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped_unseen = 0;
};

// JSON-shaped text with stable key order so reports can be diffed byte for
// byte.
std::string to_json(const EvalReport& report,
                    const corpus::LabelSpace& labels);

}  // namespace prodcat::metrics
