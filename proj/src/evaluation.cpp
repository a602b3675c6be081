#include "echomil/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <iomanip>
#include <sstream>

#include "echomil/errors.hpp"

namespace echomil {

namespace fs = std::filesystem;

MetricsReport metrics_from_records(const std::vector<SampleRecord>& records) {
  if (records.empty()) throw ArgumentError("evaluation needs at least one sample");
  std::vector<Label> preds, truths;
  std::vector<double> scores;
  for (const auto& r : records) {
    preds.push_back(r.label);
    truths.push_back(r.truth);
    scores.push_back(r.score);
  }
  MetricsReport m = derive_metrics(confusion_matrix(preds, truths));
  if (m.counts.positives() > 0 && m.counts.negatives() > 0) m.auc = auc(scores, truths);
  return m;
}

Evaluation evaluate_model(const VideoClassifier& model, const std::vector<SamplePtr>& samples,
                          int workers) {
  if (samples.empty()) throw ArgumentError("evaluation needs at least one sample");
  workers = std::clamp(workers, 1, static_cast<int>(samples.size()));
  const auto score_range = [&](std::size_t first, std::size_t step) {
    VideoClassifier local = model;
    std::vector<SampleRecord> out;
    for (std::size_t i = first; i < samples.size(); i += step) {
      const auto& s = *samples[i];
      const Prediction p = predict_video(local, s.frames);
      out.push_back({s.id, s.label, p.final_score, p.final_label, p.collection_votes,
                     p.collection_scores});
    }
    return out;
  };
  Evaluation ev;
  if (workers == 1) {
    ev.records = score_range(0, 1);
  } else {
    std::vector<std::future<std::vector<SampleRecord>>> jobs;
    for (int w = 0; w < workers; ++w) {
      jobs.push_back(std::async(std::launch::async, score_range, static_cast<std::size_t>(w),
                                static_cast<std::size_t>(workers)));
    }
    for (auto& job : jobs) {
      auto part = job.get();
      ev.records.insert(ev.records.end(), std::make_move_iterator(part.begin()),
                        std::make_move_iterator(part.end()));
    }
  }
  std::sort(ev.records.begin(), ev.records.end(),
            [](const SampleRecord& a, const SampleRecord& b) { return a.id < b.id; });
  ev.metrics = metrics_from_records(ev.records);
  return ev;
}

Evaluation evaluate_model(const Checkpoint& checkpoint, const std::vector<SamplePtr>& samples,
                          int workers) {
  return evaluate_model(classifier_from_checkpoint(checkpoint), samples, workers);
}

void write_predictions_csv(const std::vector<SampleRecord>& records, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "id,truth,score,label\n";
  out << std::setprecision(9);
  for (const auto& r : records) {
    out << r.id << ',' << to_int(r.truth) << ',' << r.score << ',' << to_int(r.label) << '\n';
  }
}

std::vector<SampleRecord> aggregate_by_patient(const std::vector<SampleRecord>& records,
                                               const std::map<std::string, std::string>& patient_of) {
  std::map<std::string, SampleRecord> patients;
  for (const auto& r : records) {
    const auto it = patient_of.find(r.id);
    const std::string& patient = it == patient_of.end() ? r.id : it->second;
    auto [slot, fresh] = patients.try_emplace(patient);
    SampleRecord& p = slot->second;
    if (fresh) {
      p.id = patient;
      p.truth = r.truth;
      p.score = r.score;
      p.label = r.label;
    } else {
      if (r.truth == Label::positive) p.truth = Label::positive;
      if (r.label == Label::positive) p.label = Label::positive;
      p.score = std::max(p.score, r.score);
    }
    p.votes.push_back(r.label);
    p.collection_scores.push_back(r.score);
  }
  std::vector<SampleRecord> out;
  for (auto& [id, p] : patients) out.push_back(std::move(p));
  return out;
}

std::map<std::string, std::string> read_patient_map(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read patient map '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line.rfind("id,patient", 0) != 0) {
    throw ArgumentError("patient map '" + path.string() + "' must start with header id,patient");
  }
  std::map<std::string, std::string> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || comma == 0 || comma + 1 == line.size()) {
      throw ArgumentError("patient map line " + std::to_string(line_no) + ": expected id,patient");
    }
    out[line.substr(0, comma)] = line.substr(comma + 1);
  }
  return out;
}

std::string render_test_report(const MetricsReport& m) {
  std::ostringstream s;
  s << std::left << std::setw(14) << "Accuracy(%)" << std::setw(10) << "PPV(%)" << "NPV(%)\n";
  s << std::setw(14) << format_percent(m.accuracy) << std::setw(10) << format_percent(m.ppv)
    << format_percent(m.npv) << '\n';
  s << "n=" << m.n << "  tp=" << m.counts.tp << " tn=" << m.counts.tn << " fp=" << m.counts.fp
    << " fn=" << m.counts.fn << '\n';
  return s.str();
}

}  // namespace echomil
