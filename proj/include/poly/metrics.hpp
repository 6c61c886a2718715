#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>

namespace poly::metrics {

/// A metric that may be undefined (0/0). Never silently zero.
using Value = std::optional<double>;

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t n() const { return tp + fp + fn + tn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct MetricSet {
  std::size_t n = 0;
  Value accuracy;
  Value precision;
  Value recall;
  Value f1;
  Value auc;
  Confusion confusion;

  friend bool operator==(const MetricSet&, const MetricSet&) = default;
};

/// Positive-class F1 is the default; Macro averages F1 over both classes.
enum class Averaging { Binary, Macro };

Confusion confusion(std::span<const int> preds, std::span<const int> gold);

/// accuracy, precision, recall and F1; auc is left undefined.
MetricSet classification_metrics(std::span<const int> preds, std::span<const int> gold,
                                 Averaging averaging = Averaging::Binary);

/// Mann-Whitney AUC with half credit for ties, computed from average ranks.
/// Undefined when gold lacks either class.
Value roc_auc(std::span<const double> scores, std::span<const int> gold);

/// Classification metrics from thresholded predictions plus AUC from scores.
MetricSet evaluate(std::span<const int> preds, std::span<const double> scores,
                   std::span<const int> gold, Averaging averaging = Averaging::Binary);

struct MeanStd {
  double mean = 0.0;
  Value std;  // sample standard deviation; undefined for n = 1
};

MeanStd mean_and_std(std::span<const double> values);

}  // namespace poly::metrics
