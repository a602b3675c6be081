#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "echomil/video.hpp"

namespace echomil {

struct ConfusionMatrix {
  long tp = 0;
  long tn = 0;
  long fp = 0;
  long fn = 0;

  long total() const { return tp + tn + fp + fn; }
  long positives() const { return tp + fn; }
  long negatives() const { return tn + fp; }
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Metrics in [0, 1]. An empty optional marks a metric whose denominator is
/// zero; it renders as "—" and never as 0.
struct MetricsReport {
  std::optional<double> accuracy;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> f1;
  std::optional<double> auc;
  std::optional<double> ppv;
  std::optional<double> npv;
  ConfusionMatrix counts;
  int n = 0;
};

/// +1 is the positive class.
ConfusionMatrix confusion_matrix(std::span<const Label> predictions, std::span<const Label> truths);

/// Everything except AUC. Requires counts.total() >= 1.
MetricsReport derive_metrics(const ConfusionMatrix& counts);

/// Rank-based (Mann-Whitney) AUC with ties counted one half. Throws
/// UndefinedMetricError when only one class is present.
double auc(std::span<const double> scores, std::span<const Label> truths);

/// Mean and population standard deviation over folds. Undefined if any
/// input is undefined or the input is empty.
struct MeanStd {
  std::optional<double> mean;
  std::optional<double> stddev;
};
MeanStd mean_std(std::span<const std::optional<double>> values);

/// "87.50" style percentage with two decimals, or "—".
std::string format_percent(const std::optional<double>& value);
/// "87.50±3.10" style, or "—".
std::string format_mean_std(const MeanStd& value);

}  // namespace echomil
