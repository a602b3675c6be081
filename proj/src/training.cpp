#include "echomil/training.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <mutex>
#include <random>
#include <sstream>

#include "echomil/config.hpp"
#include "echomil/errors.hpp"
#include "echomil/seed.hpp"

namespace echomil {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Optimizer optimizer) {
  return optimizer == Optimizer::sgd ? "sgd" : "sgd_momentum";
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be > 0");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
}

double compute_loss(double logit, Label label) {
  if (!std::isfinite(logit)) throw NumericError("non-finite logit");
  const double t = label_target(label);
  return std::max(logit, 0.0) - logit * t + std::log1p(std::exp(-std::abs(logit)));
}

namespace {

std::vector<std::string> ids_of(const std::vector<SamplePtr>& samples) {
  std::vector<std::string> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) ids.push_back(s->id);
  return ids;
}

class Sgd {
 public:
  Sgd(std::vector<nn::Param*> params, const TrainConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
    if (cfg_.optimizer == Optimizer::sgd_momentum) {
      for (auto* p : params_) velocity_.emplace_back(p->size(), 0.0f);
    }
  }

  void step() {
    const auto lr = static_cast<float>(cfg_.learning_rate);
    const auto mu = static_cast<float>(cfg_.momentum);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& value = params_[i]->value;
      const auto& grad = params_[i]->grad;
      if (velocity_.empty()) {
        for (std::size_t j = 0; j < value.size(); ++j) value[j] -= lr * grad[j];
      } else {
        auto& v = velocity_[i];
        for (std::size_t j = 0; j < value.size(); ++j) {
          v[j] = mu * v[j] + grad[j];
          value[j] -= lr * v[j];
        }
      }
    }
  }

 private:
  std::vector<nn::Param*> params_;
  TrainConfig cfg_;
  std::vector<std::vector<float>> velocity_;
};

// Concatenates the selected frames of several videos into one network input.
Tensor batch_input(const std::vector<const VideoSample*>& videos,
                   const std::vector<std::vector<int>>& indices, const ModelConfig& cfg) {
  const int per = cfg.num_frames;
  const int s = cfg.input_size;
  Tensor out(static_cast<int>(videos.size()) * per, 3, 1, s, s);
  for (std::size_t b = 0; b < videos.size(); ++b) {
    const Tensor t = frames_to_tensor(videos[b]->frames, indices[b], s, cfg.normalization);
    std::copy(t.data.begin(), t.data.end(), out.sample(static_cast<int>(b) * per));
  }
  return out;
}

bool better(const MetricsReport& candidate, const MetricsReport& best) {
  const double ca = candidate.accuracy.value_or(-1.0), ba = best.accuracy.value_or(-1.0);
  if (ca != ba) return ca > ba;
  // Later epochs win full ties.
  return candidate.auc.value_or(-1.0) >= best.auc.value_or(-1.0);
}

}  // namespace

TrainResult train_fold(const std::vector<SamplePtr>& train, const std::vector<SamplePtr>& val,
                       const ModelConfig& model_config, const TrainConfig& train_config,
                       const EpochCallback& on_epoch) {
  check_disjoint(ids_of(train), ids_of(val));
  if (train.empty()) throw ArgumentError("training set is empty");
  model_config.validate();
  train_config.validate();

  VideoClassifier model = make_classifier(model_config, train_config.seed);
  Sgd optimizer(model.parameters(), train_config);
  const int n = model_config.num_frames;

  TrainResult result;
  std::optional<MetricsReport> best;
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= train_config.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(mix_seed(train_config.seed, 0x5EED0000ULL + epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    int correct = 0;
    for (std::size_t first = 0; first < order.size(); first += train_config.batch_size) {
      const std::size_t last = std::min(order.size(), first + train_config.batch_size);
      std::vector<const VideoSample*> videos;
      std::vector<std::vector<int>> indices;
      for (std::size_t i = first; i < last; ++i) {
        const VideoSample& v = *train[order[i]];
        const BlockPartition part = partition_blocks(v.frames.frames, n);
        const FrameIndexCollection c =
            train_config.use_brs
                ? block_random_select(part, sampling_seed(train_config.seed, epoch, v.id))
                : block_first_select(part);
        videos.push_back(&v);
        indices.push_back(c.resolve(v.frames.frames));
      }
      const int batch = static_cast<int>(videos.size());
      model.zero_grad();
      const auto out = model.forward(batch_input(videos, indices, model_config), batch,
                                     nn::Pass::training);
      std::vector<float> d_logits(batch);
      for (int b = 0; b < batch; ++b) {
        const double logit = out.logits[b];
        loss_sum += compute_loss(logit, videos[b]->label);
        const double p = logistic(logit);
        if (vote_for(p) == videos[b]->label) ++correct;
        d_logits[b] = static_cast<float>((p - label_target(videos[b]->label)) / batch);
      }
      model.backward(d_logits);
      optimizer.step();
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(train.size());
    record.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
    if (!std::isfinite(record.train_loss)) throw NumericError("training diverged");
    if (!val.empty()) record.val_metrics = evaluate_model(model, val).metrics;
    const bool keep = val.empty() ? epoch == train_config.epochs
                                  : (!best || better(*record.val_metrics, *best));
    if (keep) {
      if (record.val_metrics) best = record.val_metrics;
      result.best_epoch = epoch;
      result.checkpoint = make_checkpoint(model, train_config, epoch,
                                          mix_seed(train_config.seed, static_cast<std::uint64_t>(epoch)));
    }
    spdlog::debug("epoch {} loss {:.4f} acc {:.3f}", epoch, record.train_loss,
                  record.train_accuracy);
    if (on_epoch) on_epoch(record);
    result.history.push_back(std::move(record));
  }
  return result;
}

// ------------------------------------------------------- cross-validation

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"auc", "accuracy", "sensitivity", "specificity",
                                              "f1", "ppv", "npv"};
  return names;
}

std::optional<double> metric_value(const MetricsReport& r, const std::string& name) {
  if (name == "auc") return r.auc;
  if (name == "accuracy") return r.accuracy;
  if (name == "sensitivity") return r.sensitivity;
  if (name == "specificity") return r.specificity;
  if (name == "f1") return r.f1;
  if (name == "ppv") return r.ppv;
  if (name == "npv") return r.npv;
  throw ArgumentError("unknown metric '" + name + "'");
}

MeanStd aggregate_metric(const std::vector<FoldResult>& folds, const std::string& name) {
  std::vector<std::optional<double>> values;
  for (const auto& f : folds) values.push_back(metric_value(f.metrics, name));
  return mean_std(values);
}

CVReport run_cross_validation(const std::vector<SamplePtr>& samples, const FoldSplit& split,
                              const ModelConfig& model_config, const TrainConfig& train_config,
                              const CVOptions& options) {
  if (options.repetitions < 1) throw ArgumentError("repetitions must be >= 1");
  DatasetManifest manifest;
  for (const auto& s : samples) manifest.entries.push_back({s->id, s->id, s->label, s->view});
  validate_fold_split(split, manifest);

  std::vector<FoldSplit> splits{split};
  for (int r = 1; r < options.repetitions; ++r) {
    splits.push_back(make_fold_splits(manifest, split.k, mix_seed(split.seed, r)));
  }

  struct Task {
    int repetition;
    int fold;
  };
  std::vector<Task> tasks;
  for (int r = 0; r < options.repetitions; ++r) {
    for (int f = 0; f < split.k; ++f) tasks.push_back({r, f});
  }

  std::mutex callback_mutex;
  const auto run_task = [&](const Task& task) {
    const FoldSplit& s = splits[task.repetition];
    std::vector<SamplePtr> train, val;
    for (const auto& sample : samples) {
      (s.assignments.at(sample->id) == task.fold ? val : train).push_back(sample);
    }
    EpochCallback cb;
    if (options.on_epoch) {
      cb = [&](const EpochRecord& rec) {
        std::lock_guard lock(callback_mutex);
        options.on_epoch(task.repetition, task.fold, rec);
      };
    }
    TrainConfig tc = train_config;
    tc.seed = mix_seed(train_config.seed, static_cast<std::uint64_t>(task.repetition * 1000 + task.fold));
    TrainResult trained = train_fold(train, val, model_config, tc, cb);
    Evaluation ev = evaluate_model(trained.checkpoint, val);
    return FoldResult{task.repetition, task.fold, ev.metrics, std::move(ev.records),
                      std::move(trained.history), trained.best_epoch};
  };

  CVReport report;
  report.k = split.k;
  report.repetitions = options.repetitions;
  const int workers = std::max(1, options.workers);
  for (std::size_t first = 0; first < tasks.size(); first += workers) {
    const std::size_t last = std::min(tasks.size(), first + workers);
    if (last - first == 1) {
      report.folds.push_back(run_task(tasks[first]));
      continue;
    }
    std::vector<std::future<FoldResult>> jobs;
    for (std::size_t i = first; i < last; ++i) {
      jobs.push_back(std::async(std::launch::async, run_task, tasks[i]));
    }
    for (auto& job : jobs) report.folds.push_back(job.get());
  }
  for (const auto& name : metric_names()) report.aggregate[name] = aggregate_metric(report.folds, name);
  return report;
}

std::string pad(const std::string& text, std::size_t width) {
  // Pads by code points so "±" and "—" do not skew the columns.
  std::size_t shown = 0;
  for (unsigned char c : text) shown += (c & 0xC0) != 0x80;
  return text + std::string(shown < width ? width - shown : 1, ' ');
}

std::string render_cv_table(const CVReport& report) {
  static const std::vector<std::pair<std::string, std::string>> columns{
      {"auc", "AUC(%)"}, {"accuracy", "Accuracy(%)"}, {"sensitivity", "Sensitivity(%)"},
      {"specificity", "Specificity(%)"}, {"f1", "F1(%)"}};
  std::ostringstream s;
  s << pad("Fold", 10);
  for (const auto& col : columns) s << pad(col.second, 17);
  s << '\n';
  for (const auto& f : report.folds) {
    std::string name = std::to_string(f.fold + 1);
    if (report.repetitions > 1) name = std::to_string(f.repetition + 1) + "/" + name;
    s << pad(name, 10);
    for (const auto& col : columns) s << pad(format_percent(metric_value(f.metrics, col.first)), 17);
    s << '\n';
  }
  s << pad("Mean±Std", 10);
  for (const auto& col : columns) s << pad(format_mean_std(report.aggregate.at(col.first)), 17);
  s << "\n\nstd is the population standard deviation over " << report.folds.size()
    << " folds; undefined metrics are shown as —\n";
  return s.str();
}

json to_json(const EpochRecord& r) {
  json j{{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"train_accuracy", r.train_accuracy}};
  j["val_metrics"] = r.val_metrics ? to_json(*r.val_metrics) : json(nullptr);
  return j;
}

json to_json(const CVReport& report) {
  json folds = json::array();
  for (const auto& f : report.folds) {
    json records = json::array();
    for (const auto& r : f.records) {
      records.push_back({{"id", r.id}, {"truth", to_int(r.truth)}, {"score", r.score},
                         {"label", to_int(r.label)}, {"votes", r.votes.size()}});
    }
    folds.push_back({{"repetition", f.repetition},
                     {"fold", f.fold},
                     {"best_epoch", f.best_epoch},
                     {"metrics", to_json(f.metrics)},
                     {"predictions", std::move(records)}});
  }
  json aggregate = json::object();
  for (const auto& [name, value] : report.aggregate) aggregate[name] = to_json(value);
  return json{{"k", report.k},
              {"repetitions", report.repetitions},
              {"std", "population"},
              {"folds", std::move(folds)},
              {"aggregate", std::move(aggregate)}};
}

void append_epoch_log(const EpochRecord& record, const fs::path& path) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to '" + path.string() + "'");
  out << to_json(record).dump() << '\n';
}

}  // namespace echomil
