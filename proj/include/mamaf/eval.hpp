#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mamaf {

struct ConfusionMatrix {
  std::int64_t tp = 0, fn = 0, fp = 0, tn = 0;

  std::int64_t total() const { return tp + fn + fp + tn; }
  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    tp += o.tp, fn += o.fn, fp += o.fp, tn += o.tn;
    return *this;
  }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Fractions in [0,1]; nullopt marks an undefined metric (zero denominator).
struct Metrics {
  std::optional<double> sensitivity, specificity, precision, f1, accuracy;
};

Metrics metrics(const ConfusionMatrix& cm);

/// Rounds a fraction to a percentage with two decimals (0.93617 -> 93.62).
double percent(double fraction);
/// "93.62" or "undefined".
std::string format_percent(const std::optional<double>& fraction);

struct ScoredPrediction {
  std::string subject_id;
  double score = 0;  ///< positive-class probability
  int label = 0;
};

/// Positive iff score > 0.5, i.e. argmax of the two-way softmax with ties
/// going to the negative class.
ConfusionMatrix confusion_from_predictions(const std::vector<ScoredPrediction>& preds);

ConfusionMatrix cumulative_confusion(const std::vector<ConfusionMatrix>& folds);

struct RocPoint {
  double fpr = 0, tpr = 0;
  double threshold = 0;  ///< +inf for the (0,0) anchor
};

struct RocCurve {
  std::vector<RocPoint> points;  ///< FPR nondecreasing
  double auc = 0;
};

/// Sweeps every distinct score as a threshold (score >= t is positive) and
/// integrates by the trapezoidal rule. Needs both labels present.
RocCurve roc_auc(const std::vector<ScoredPrediction>& preds);

struct LossCurve {
  std::string label;
  std::vector<double> train, validation;
};

struct Report {
  ConfusionMatrix counts;
  Metrics metrics;
  double auc = 0;
  std::vector<double> fold_aucs;  ///< per-fold ROC AUC (nullopt folds omitted upstream)
  std::vector<ConfusionMatrix> fold_counts;
};

/// {sensitivity, specificity, precision, f1, accuracy, auc} as 2-decimal
/// percentages ("undefined" for undefined metrics) plus raw counts.
std::string metrics_json(const ConfusionMatrix& cm, const std::optional<double>& auc);
std::string report_json(const Report& report);

std::string roc_csv(const RocCurve& curve);
std::string roc_svg(const std::vector<std::pair<std::string, RocCurve>>& curves);
std::string loss_svg(const std::vector<LossCurve>& curves);

/// Writes metrics.json, roc.csv, roc.svg and loss_curve.svg into `dir`.
void emit_report(const Report& report, const RocCurve& pooled, const std::vector<std::pair<std::string, RocCurve>>& fold_curves,
                 const std::vector<LossCurve>& losses, const std::filesystem::path& dir);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace mamaf
