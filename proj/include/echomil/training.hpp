#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "echomil/checkpoint.hpp"
#include "echomil/dataset.hpp"
#include "echomil/evaluation.hpp"
#include "echomil/metrics.hpp"
#include "echomil/model.hpp"
#include "echomil/train_config.hpp"

namespace echomil {

/// Binary cross-entropy with logits against the target (label + 1) / 2.
/// Throws NumericError for a non-finite logit.
double compute_loss(double logit, Label label);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;  // from the training-pass outputs of the epoch
  std::optional<MetricsReport> val_metrics;
};

struct TrainResult {
  Checkpoint checkpoint;  // best validation accuracy, or the last epoch without validation
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains one model. Each epoch draws a fresh frame collection per video
/// (or the first-frame collection when use_brs is off) and, when val is
/// non-empty, evaluates it with predict_video. Throws LeakageError when the
/// two sets share an id.
TrainResult train_fold(const std::vector<SamplePtr>& train, const std::vector<SamplePtr>& val,
                       const ModelConfig& model_config, const TrainConfig& train_config,
                       const EpochCallback& on_epoch = {});

struct FoldResult {
  int repetition = 0;
  int fold = 0;
  MetricsReport metrics;
  std::vector<SampleRecord> records;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

struct CVReport {
  int k = 0;
  int repetitions = 1;
  std::vector<FoldResult> folds;
  std::map<std::string, MeanStd> aggregate;  // keyed by metric name
};

struct CVOptions {
  int workers = 1;      // folds trained concurrently
  int repetitions = 1;  // repetition r > 0 reshuffles the split with a derived seed
  /// Called from the training thread of each fold, serialized by a lock.
  std::function<void(int repetition, int fold, const EpochRecord&)> on_epoch;
};

/// k-fold cross-validation: train on all folds but f, score fold f, then
/// aggregate every metric as mean and population std over all folds.
CVReport run_cross_validation(const std::vector<SamplePtr>& samples, const FoldSplit& split,
                              const ModelConfig& model_config, const TrainConfig& train_config,
                              const CVOptions& options = {});

/// Metric names in table order.
const std::vector<std::string>& metric_names();
std::optional<double> metric_value(const MetricsReport& report, const std::string& name);
MeanStd aggregate_metric(const std::vector<FoldResult>& folds, const std::string& name);

/// Left-aligned cell padded to `width` code points.
std::string pad(const std::string& text, std::size_t width);

std::string render_cv_table(const CVReport& report);
nlohmann::json to_json(const EpochRecord& record);
nlohmann::json to_json(const CVReport& report);
void append_epoch_log(const EpochRecord& record, const std::filesystem::path& path);

}  // namespace echomil
