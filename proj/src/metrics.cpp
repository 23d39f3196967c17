#include "prodcat/metrics.hpp"

#include <json.hpp>

#include "prodcat/util.hpp"

namespace prodcat::metrics {

namespace {

void check_labels(const std::vector<int>& y_true,
                  const std::vector<int>& y_pred, int n_classes) {
  if (y_true.size() != y_pred.size()) {
    throw DataError("metrics: label arrays differ in length");
  }
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || y_true[i] >= n_classes || y_pred[i] < 0 ||
        y_pred[i] >= n_classes) {
      throw DataError("metrics: label out of range at position " +
                      std::to_string(i));
    }
  }
}

}  // namespace

std::vector<ClassStats> precision_recall_per_class(
    const std::vector<int>& y_true, const std::vector<int>& y_pred,
    int n_classes) {
  check_labels(y_true, y_pred, n_classes);
  std::vector<std::size_t> tp(static_cast<std::size_t>(n_classes), 0);
  std::vector<std::size_t> fp(static_cast<std::size_t>(n_classes), 0);
  std::vector<std::size_t> fn(static_cast<std::size_t>(n_classes), 0);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const std::size_t t = static_cast<std::size_t>(y_true[i]);
    const std::size_t p = static_cast<std::size_t>(y_pred[i]);
    if (t == p) {
      ++tp[t];
    } else {
      ++fp[p];
      ++fn[t];
    }
  }
  std::vector<ClassStats> stats(static_cast<std::size_t>(n_classes));
  for (std::size_t c = 0; c < stats.size(); ++c) {
    const double tp_c = static_cast<double>(tp[c]);
    stats[c].support = tp[c] + fn[c];
    stats[c].precision = tp[c] + fp[c] == 0 ? 0.0 : tp_c / (tp_c + fp[c]);
    stats[c].recall = tp[c] + fn[c] == 0 ? 0.0 : tp_c / (tp_c + fn[c]);
    const double denom = stats[c].precision + stats[c].recall;
    stats[c].f1 =
        denom == 0.0 ? 0.0
                     : 2.0 * stats[c].precision * stats[c].recall / denom;
  }
  return stats;
}

double f1_macro(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                int n_classes) {
  if (n_classes <= 0) throw DataError("f1_macro: n_classes must be positive");
  std::vector<ClassStats> stats =
      precision_recall_per_class(y_true, y_pred, n_classes);
  double sum = 0.0;
  for (const ClassStats& s : stats) sum += s.f1;
  return sum / static_cast<double>(n_classes);
}

HeadReport head_report(const std::vector<int>& y_true,
                       const std::vector<int>& y_pred, int n_classes) {
  HeadReport report;
  report.per_class = precision_recall_per_class(y_true, y_pred, n_classes);
  double sum = 0.0;
  for (const ClassStats& s : report.per_class) sum += s.f1;
  report.macro_f1 = n_classes == 0 ? 0.0 : sum / n_classes;
  report.confusion.assign(
      static_cast<std::size_t>(n_classes),
      std::vector<std::size_t>(static_cast<std::size_t>(n_classes), 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    ++report.confusion[static_cast<std::size_t>(y_true[i])]
                      [static_cast<std::size_t>(y_pred[i])];
  }
  return report;
}

std::string to_json(const EvalReport& report,
                    const corpus::LabelSpace& labels) {
  nlohmann::ordered_json j;
  j["macro_f1_mean"] = report.macro_f1_mean;
  j["evaluated"] = report.evaluated;
  j["skipped_unseen"] = report.skipped_unseen;
  nlohmann::ordered_json heads = nlohmann::ordered_json::array();
  for (int h = 0; h < 4; ++h) {
    const HeadReport& head = report.heads[static_cast<std::size_t>(h)];
    nlohmann::ordered_json jh;
    jh["head"] = corpus::level_name(static_cast<corpus::Level>(h));
    jh["macro_f1"] = head.macro_f1;
    nlohmann::ordered_json classes = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < head.per_class.size(); ++c) {
      const ClassStats& s = head.per_class[c];
      nlohmann::ordered_json jc;
      jc["label"] = labels.labels[static_cast<std::size_t>(h)][c];
      jc["precision"] = s.precision;
      jc["recall"] = s.recall;
      jc["f1"] = s.f1;
      jc["support"] = s.support;
      classes.push_back(std::move(jc));
    }
    jh["classes"] = std::move(classes);
    heads.push_back(std::move(jh));
  }
  j["heads"] = std::move(heads);
  return j.dump(2) + "\n";
}

}  // namespace prodcat::metrics
