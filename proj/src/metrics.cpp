#include "echomil/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "echomil/errors.hpp"

namespace echomil {

namespace {

std::optional<double> ratio(long num, long den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionMatrix confusion_matrix(std::span<const Label> predictions, std::span<const Label> truths) {
  if (predictions.size() != truths.size()) {
    throw ArgumentError("predictions and truths differ in length (" +
                        std::to_string(predictions.size()) + " vs " +
                        std::to_string(truths.size()) + ")");
  }
  if (predictions.empty()) throw ArgumentError("confusion matrix needs at least one sample");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool pred = predictions[i] == Label::positive;
    const bool truth = truths[i] == Label::positive;
    if (pred && truth) {
      ++cm.tp;
    } else if (!pred && !truth) {
      ++cm.tn;
    } else if (pred) {
      ++cm.fp;
    } else {
      ++cm.fn;
    }
  }
  return cm;
}

MetricsReport derive_metrics(const ConfusionMatrix& cm) {
  if (cm.tp < 0 || cm.tn < 0 || cm.fp < 0 || cm.fn < 0) {
    throw ArgumentError("confusion matrix counts must be non-negative");
  }
  if (cm.total() < 1) throw ArgumentError("metrics need at least one counted sample");
  MetricsReport r;
  r.counts = cm;
  r.n = static_cast<int>(cm.total());
  r.accuracy = ratio(cm.tp + cm.tn, cm.total());
  r.sensitivity = ratio(cm.tp, cm.tp + cm.fn);
  r.specificity = ratio(cm.tn, cm.tn + cm.fp);
  // F1 = TP / (TP + (FP + FN) / 2), written over integers.
  r.f1 = ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn);
  r.ppv = ratio(cm.tp, cm.tp + cm.fp);
  r.npv = ratio(cm.tn, cm.tn + cm.fn);
  return r;
}

double auc(std::span<const double> scores, std::span<const Label> truths) {
  if (scores.size() != truths.size()) throw ArgumentError("scores and truths differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  long positives = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    // Ranks i+1 .. j+1 share their average.
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (truths[order[k]] == Label::positive) {
        positive_rank_sum += rank;
        ++positives;
      }
    }
    i = j + 1;
  }
  const long negatives = static_cast<long>(n) - positives;
  if (positives == 0 || negatives == 0) {
    throw UndefinedMetricError("AUC is undefined unless both classes are present");
  }
  const double u = positive_rank_sum - 0.5 * static_cast<double>(positives) * (positives + 1);
  return u / (static_cast<double>(positives) * static_cast<double>(negatives));
}

MeanStd mean_std(std::span<const std::optional<double>> values) {
  if (values.empty()) return {};
  double sum = 0.0;
  for (const auto& v : values) {
    if (!v) return {};
    sum += *v;
  }
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (const auto& v : values) sq += (*v - mean) * (*v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

std::string format_percent(const std::optional<double>& value) {
  if (!value) return "—";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *value * 100.0);
  return buf;
}

std::string format_mean_std(const MeanStd& value) {
  if (!value.mean || !value.stddev) return "—";
  return format_percent(value.mean) + "±" + format_percent(value.stddev);
}

}  // namespace echomil
