#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "echomil/checkpoint.hpp"
#include "echomil/dataset.hpp"
#include "echomil/metrics.hpp"
#include "echomil/model.hpp"

namespace echomil {

/// Outcome of predict_video for one sample.
struct SampleRecord {
  std::string id;
  Label truth = Label::negative;
  double score = 0.0;
  Label label = Label::negative;
  std::vector<Label> votes;
  std::vector<double> collection_scores;
};

struct Evaluation {
  MetricsReport metrics;
  std::vector<SampleRecord> records;  // sorted by id
};

/// Confusion-matrix metrics from final labels plus AUC from final scores.
/// AUC stays undefined when only one class is present.
MetricsReport metrics_from_records(const std::vector<SampleRecord>& records);

/// Runs predict_video on every sample. With workers > 1 each worker scores
/// its share on a private copy of the model; results are ordered by id.
Evaluation evaluate_model(const VideoClassifier& model, const std::vector<SamplePtr>& samples,
                          int workers = 1);
Evaluation evaluate_model(const Checkpoint& checkpoint, const std::vector<SamplePtr>& samples,
                          int workers = 1);

/// CSV with columns id,truth,score,label.
void write_predictions_csv(const std::vector<SampleRecord>& records,
                           const std::filesystem::path& path);

/// Patient-level records: a patient is predicted positive when any of their
/// videos is, scores take the maximum and the truth is positive when any
/// video is labeled positive. Videos absent from `patient_of` stand alone.
/// Output is sorted by patient id; `votes` holds the per-video labels.
std::vector<SampleRecord> aggregate_by_patient(const std::vector<SampleRecord>& records,
                                               const std::map<std::string, std::string>& patient_of);

/// CSV with header `id,patient` mapping video ids to patient ids.
std::map<std::string, std::string> read_patient_map(const std::filesystem::path& path);

/// Accuracy / PPV / NPV table for a held-out test set.
std::string render_test_report(const MetricsReport& metrics);

}  // namespace echomil
