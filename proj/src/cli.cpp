#include "echomil/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>
#include <sstream>

#include "echomil/ablation.hpp"
#include "echomil/checkpoint.hpp"
#include "echomil/config.hpp"
#include "echomil/dataset.hpp"
#include "echomil/errors.hpp"
#include "echomil/evaluation.hpp"
#include "echomil/explain.hpp"
#include "echomil/training.hpp"

namespace echomil {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  int workers = 1;
};

// Everything a command needs, resolved from the config file, the overrides
// and the flags. `tree` is echoed to config.resolved.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SyntheticSpec synth;
  std::string manifest;
  std::string folds;
  int k = 5;
  int val_fold = 0;
  int repetitions = 1;
  json tree;
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

RunConfig resolve_config(const CommonOptions& opts) {
  json raw = opts.config_path.empty() ? json::object() : read_json_file(opts.config_path);
  if (!raw.is_object()) throw ConfigError("config root must be an object");
  for (const auto& o : opts.overrides) apply_override(raw, o);
  reject_unknown_keys(raw, {"model", "train", "synth", "data", "cv"}, "config");

  RunConfig rc;
  rc.model = model_config_from_json(raw.value("model", json::object()), "model");
  rc.train = train_config_from_json(raw.value("train", json::object()), "train");
  rc.synth = synthetic_spec_from_json(raw.value("synth", json::object()), "synth");

  const json data = raw.value("data", json::object());
  if (!data.is_object()) throw ConfigError("'data' must be an object");
  reject_unknown_keys(data, {"manifest", "folds", "k", "val_fold"}, "data");
  try {
    rc.manifest = data.value("manifest", std::string());
    rc.folds = data.value("folds", std::string());
    rc.k = data.value("k", 5);
    rc.val_fold = data.value("val_fold", 0);
  } catch (const json::exception&) {
    throw ConfigError("bad value in 'data'");
  }
  const json cv = raw.value("cv", json::object());
  if (!cv.is_object()) throw ConfigError("'cv' must be an object");
  reject_unknown_keys(cv, {"repetitions"}, "cv");
  try {
    rc.repetitions = cv.value("repetitions", 1);
  } catch (const json::exception&) {
    throw ConfigError("bad value for 'cv.repetitions'");
  }

  if (opts.seed) {
    rc.train.seed = *opts.seed;
    rc.synth.seed = *opts.seed;
  }
  rc.model.validate();
  rc.train.validate();
  if (rc.k < 2) throw ConfigError("data.k must be >= 2");
  if (rc.repetitions < 1) throw ConfigError("cv.repetitions must be >= 1");

  rc.tree = json{{"model", to_json(rc.model)},
                 {"train", to_json(rc.train)},
                 {"synth", to_json(rc.synth)},
                 {"data",
                  {{"manifest", rc.manifest},
                   {"folds", rc.folds},
                   {"k", rc.k},
                   {"val_fold", rc.val_fold}}},
                 {"cv", {{"repetitions", rc.repetitions}}}};
  return rc;
}

fs::path prepare_out(const std::string& dir) {
  if (dir.empty()) throw ArgumentError("--out is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir + "'");
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void echo_config(const RunConfig& rc, const fs::path& out) {
  write_text(out / "config.resolved", rc.tree.dump(2) + "\n");
}

void add_common(CLI::App* cmd, CommonOptions& opts, bool with_out = true) {
  cmd->add_option("--config", opts.config_path, "JSON config file");
  cmd->add_option("--set", opts.overrides, "override a config key, e.g. train.epochs=10");
  cmd->add_option("--seed", opts.seed, "seed for every random draw");
  cmd->add_option("--workers", opts.workers, "worker threads")->check(CLI::PositiveNumber);
  if (with_out) cmd->add_option("--out", opts.out_dir, "output directory")->required();
}

std::vector<SamplePtr> load_manifest_samples(const std::string& path, int workers) {
  if (path.empty()) throw ArgumentError("no manifest given (data.manifest or --manifest)");
  return load_dataset(read_manifest(path), workers);
}

FoldSplit resolve_split(const RunConfig& rc, const DatasetManifest& manifest) {
  FoldSplit split = rc.folds.empty() ? make_fold_splits(manifest, rc.k, rc.train.seed)
                                     : read_fold_split(rc.folds);
  validate_fold_split(split, manifest);
  return split;
}

json prediction_json(const Prediction& p) {
  json votes = json::array();
  for (Label v : p.collection_votes) votes.push_back(to_int(v));
  return json{{"votes", votes},
              {"scores", p.collection_scores},
              {"final_label", to_int(p.final_label)},
              {"final_score", p.final_score}};
}

}  // namespace

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ArgumentError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &config;
  std::stringstream parts(key);
  std::string part;
  std::vector<std::string> path;
  while (std::getline(parts, part, '.')) path.push_back(part);
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    if (!node->contains(path[i])) (*node)[path[i]] = json::object();
    node = &(*node)[path[i]];
    if (!node->is_object()) throw ConfigError("'" + key + "' does not name a config section");
  }
  (*node)[path.back()] = std::move(value);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Weakly supervised video classifier: data synthesis, training and evaluation"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  CommonOptions opts;
  std::string manifest_path, checkpoint_path, video_path, split_out, patients_path;
  int k = 5;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, opts);

  auto* split = app.add_subcommand("split", "write stratified k-fold assignments");
  split->add_option("--manifest", manifest_path, "dataset manifest")->required();
  split->add_option("--k", k, "number of folds")->check(CLI::Range(2, 1000));
  add_common(split, opts);

  auto* cv = app.add_subcommand("cv", "k-fold cross-validation");
  cv->add_option("--manifest", manifest_path, "dataset manifest (overrides data.manifest)");
  add_common(cv, opts);

  auto* train = app.add_subcommand("train", "train on all folds but data.val_fold");
  train->add_option("--manifest", manifest_path, "dataset manifest (overrides data.manifest)");
  add_common(train, opts);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval->add_option("--manifest", manifest_path, "dataset manifest")->required();
  eval->add_option("--patients", patients_path, "CSV id,patient for a per-patient OR report");
  add_common(eval, opts);

  auto* predict = app.add_subcommand("predict", "score one video");
  predict->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  predict->add_option("video", video_path, "video file")->required();

  auto* ablate = app.add_subcommand("ablate", "run both ablation grids");
  ablate->add_option("--manifest", manifest_path, "dataset manifest (overrides data.manifest)");
  add_common(ablate, opts);

  auto* heatmap = app.add_subcommand("heatmap", "saliency maps for one video");
  heatmap->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  heatmap->add_option("video", video_path, "video file")->required();
  heatmap->add_option("--out", opts.out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    if (synth->parsed()) {
      const RunConfig rc = resolve_config(opts);
      const fs::path dir = prepare_out(opts.out_dir);
      const auto ds = generate_synthetic_dataset(rc.synth, dir);
      echo_config(rc, dir);
      out << "wrote " << ds.manifest.entries.size() << " videos to " << dir.string() << '\n';
    } else if (split->parsed()) {
      const RunConfig rc = resolve_config(opts);
      const fs::path dir = prepare_out(opts.out_dir);
      const auto manifest = read_manifest(manifest_path);
      const FoldSplit s = make_fold_splits(manifest, k, rc.train.seed);
      validate_fold_split(s, manifest);
      write_fold_split(s, dir / "folds.json");
      echo_config(rc, dir);
      out << "wrote " << (dir / "folds.json").string() << '\n';
    } else if (cv->parsed() || ablate->parsed()) {
      RunConfig rc = resolve_config(opts);
      if (!manifest_path.empty()) rc.manifest = manifest_path;
      rc.tree["data"]["manifest"] = rc.manifest;
      const fs::path dir = prepare_out(opts.out_dir);
      const auto manifest = read_manifest(rc.manifest);
      const auto samples = load_dataset(manifest, opts.workers);
      const FoldSplit s = resolve_split(rc, manifest);
      write_fold_split(s, dir / "folds.json");
      echo_config(rc, dir);
      CVOptions cvo;
      cvo.workers = opts.workers;
      cvo.repetitions = rc.repetitions;
      if (cv->parsed()) {
        const fs::path log = dir / "epochs.jsonl";
        fs::remove(log);
        cvo.on_epoch = [&](int rep, int fold, const EpochRecord& rec) {
          json line = to_json(rec);
          line["repetition"] = rep;
          line["fold"] = fold;
          std::ofstream(log, std::ios::app) << line.dump() << '\n';
        };
        const CVReport report = run_cross_validation(samples, s, rc.model, rc.train, cvo);
        write_text(dir / "cv_report.json", to_json(report).dump(2) + "\n");
        const std::string table = render_cv_table(report);
        write_text(dir / "report.txt", table);
        out << table;
      } else {
        const AblationReport report = run_ablation_grid(samples, s, rc.model, rc.train, cvo);
        write_text(dir / "ablation.json", to_json(report).dump(2) + "\n");
        const std::string text = render_ablation(report);
        write_text(dir / "report.txt", text);
        out << text;
      }
    } else if (train->parsed()) {
      RunConfig rc = resolve_config(opts);
      if (!manifest_path.empty()) rc.manifest = manifest_path;
      rc.tree["data"]["manifest"] = rc.manifest;
      const fs::path dir = prepare_out(opts.out_dir);
      const auto manifest = read_manifest(rc.manifest);
      const FoldSplit s = resolve_split(rc, manifest);
      if (rc.val_fold < 0 || rc.val_fold >= s.k) throw ConfigError("data.val_fold out of range");
      const auto samples = load_dataset(manifest, opts.workers);
      std::vector<SamplePtr> train_set, val_set;
      for (const auto& sample : samples) {
        (s.assignments.at(sample->id) == rc.val_fold ? val_set : train_set).push_back(sample);
      }
      write_fold_split(s, dir / "folds.json");
      echo_config(rc, dir);
      const fs::path log = dir / "train_log.jsonl";
      fs::remove(log);
      const TrainResult result = train_fold(train_set, val_set, rc.model, rc.train,
                                            [&](const EpochRecord& r) { append_epoch_log(r, log); });
      save_checkpoint(result.checkpoint, dir / "model.ckpt");
      const Evaluation ev = evaluate_model(result.checkpoint, val_set, opts.workers);
      write_text(dir / "report.txt", render_test_report(ev.metrics));
      out << "best epoch " << result.best_epoch << '\n' << render_test_report(ev.metrics);
    } else if (eval->parsed()) {
      const fs::path dir = prepare_out(opts.out_dir);
      const Checkpoint ck = load_checkpoint(checkpoint_path);
      const auto samples = load_manifest_samples(manifest_path, opts.workers);
      const Evaluation ev = evaluate_model(ck, samples, opts.workers);
      write_predictions_csv(ev.records, dir / "predictions.csv");
      write_text(dir / "metrics.json", to_json(ev.metrics).dump(2) + "\n");
      std::string text = render_test_report(ev.metrics);
      if (!patients_path.empty()) {
        const auto patients = aggregate_by_patient(ev.records, read_patient_map(patients_path));
        const MetricsReport pm = metrics_from_records(patients);
        write_predictions_csv(patients, dir / "patient_predictions.csv");
        write_text(dir / "patient_metrics.json", to_json(pm).dump(2) + "\n");
        text += "\nper patient (positive if any video is positive)\n" + render_test_report(pm);
      }
      write_text(dir / "report.txt", text);
      out << text;
    } else if (predict->parsed()) {
      const Checkpoint ck = load_checkpoint(checkpoint_path);
      VideoClassifier model = classifier_from_checkpoint(ck);
      const FrameStack frames = decode_video(video_path);
      out << prediction_json(predict_video(model, frames)).dump() << '\n';
    } else if (heatmap->parsed()) {
      const fs::path dir = prepare_out(opts.out_dir);
      const Checkpoint ck = load_checkpoint(checkpoint_path);
      VideoClassifier model = classifier_from_checkpoint(ck);
      const FrameStack frames = decode_video(video_path);
      const HeatmapResult r = generate_heatmap(model, frames);
      write_heatmap(r, fs::path(video_path).stem().string(), dir);
      out << "wrote " << r.frames << " heat maps to " << dir.string() << '\n';
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error: " << msg << '\n';
    return 1;
  }
  return 0;
}

}  // namespace echomil
