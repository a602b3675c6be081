#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "echomil/errors.hpp"
#include "echomil/seed.hpp"
#include "echomil/training.hpp"
#include "support.hpp"

using namespace echomil;

namespace {

std::vector<SamplePtr> tiny_videos(int pos, int neg, std::uint64_t seed, int frames = 32) {
  SyntheticSpec spec = testing::tiny_spec(pos, neg, seed);
  spec.frames_per_video = frames;
  spec.event_min_len = std::min(spec.event_min_len, frames);
  spec.event_max_len = std::min(spec.event_max_len, frames);
  return testing::to_ptrs(synthesize_in_memory(spec));
}

TrainConfig quick_config(int epochs) {
  TrainConfig t;
  t.learning_rate = 0.01;
  t.optimizer = Optimizer::sgd_momentum;
  t.batch_size = 4;
  t.epochs = epochs;
  t.seed = 5;
  return t;
}

}  // namespace

TEST_CASE("loss values") {
  CHECK(compute_loss(0.0, Label::positive) == doctest::Approx(std::log(2.0)));
  CHECK(compute_loss(0.0, Label::negative) == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(compute_loss(20.0, Label::positive) < 1e-8);
  CHECK(compute_loss(1.0, Label::positive) == doctest::Approx(0.31326).epsilon(1e-5));
  CHECK(compute_loss(1.0, Label::negative) == doctest::Approx(std::log1p(std::exp(1.0))));
  CHECK(compute_loss(1e4, Label::negative) == doctest::Approx(1e4));
  CHECK(compute_loss(-1e4, Label::positive) == doctest::Approx(1e4));
  CHECK(compute_loss(1e4, Label::positive) == 0.0);
  CHECK_THROWS_AS(compute_loss(std::numeric_limits<double>::quiet_NaN(), Label::positive), NumericError);
  CHECK_THROWS_AS(compute_loss(std::numeric_limits<double>::infinity(), Label::negative), NumericError);
}

TEST_CASE("loss matches the naive formula where that is stable") {
  testing::Gen gen(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const double x = gen.real(-15, 15);
    const Label l = gen.label();
    const double p = 1.0 / (1.0 + std::exp(-x));
    const double naive = l == Label::positive ? -std::log(p) : -std::log(1.0 - p);
    CHECK(compute_loss(x, l) == doctest::Approx(naive).epsilon(1e-9));
  }
}

TEST_CASE("configuration checks") {
  TrainConfig t;
  CHECK_NOTHROW(t.validate());
  t.learning_rate = 0.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.epochs = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("one full-batch epoch is one gradient step") {
  const auto videos = tiny_videos(2, 2, 3, 16);
  const ModelConfig cfg = ModelConfig::toy();
  TrainConfig tc;
  tc.learning_rate = 0.05;
  tc.batch_size = 4;
  tc.epochs = 1;
  tc.seed = 17;

  for (Optimizer opt : {Optimizer::sgd, Optimizer::sgd_momentum}) {
    tc.optimizer = opt;
    const TrainResult r = train_fold(videos, {}, cfg, tc);
    VideoClassifier trained = classifier_from_checkpoint(r.checkpoint);

    VideoClassifier ref = make_classifier(cfg, tc.seed);
    std::vector<float> before;
    for (nn::Param* p : ref.parameters()) before.insert(before.end(), p->value.begin(), p->value.end());
    Tensor input(16 * 4, 3, 1, 32, 32);
    std::vector<int> all(16);
    for (int i = 0; i < 16; ++i) all[i] = i;
    for (int b = 0; b < 4; ++b) {
      const Tensor t = frames_to_tensor(videos[b]->frames, all, 32, cfg.normalization);
      std::copy(t.data.begin(), t.data.end(), input.sample(16 * b));
    }
    ref.zero_grad();
    const auto out = ref.forward(input, 4, nn::Pass::training);
    std::vector<float> d(4);
    for (int b = 0; b < 4; ++b) {
      d[b] = static_cast<float>((logistic(out.logits[b]) - label_target(videos[b]->label)) / 4.0);
    }
    ref.backward(d);

    std::size_t offset = 0;
    double worst = 0.0;
    const auto ref_params = ref.parameters();
    const auto got_params = trained.parameters();
    REQUIRE(ref_params.size() == got_params.size());
    for (std::size_t k = 0; k < ref_params.size(); ++k) {
      for (std::size_t i = 0; i < ref_params[k]->size(); ++i) {
        const double expected = before[offset + i] - tc.learning_rate * ref_params[k]->grad[i];
        worst = std::max(worst, std::abs(expected - got_params[k]->value[i]));
      }
      offset += ref_params[k]->size();
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("a single batch is memorized") {
  const auto videos = tiny_videos(2, 2, 11, 16);
  TrainConfig tc = quick_config(120);
  tc.batch_size = 4;
  const TrainResult r = train_fold(videos, {}, ModelConfig::toy(), tc);
  VideoClassifier model = classifier_from_checkpoint(r.checkpoint);
  for (const auto& v : videos) {
    if (v->label != Label::positive) continue;
    CHECK(predict_video(model, v->frames).final_score > 0.99);
  }
}

TEST_CASE("training is reproducible for a fixed seed") {
  const auto videos = tiny_videos(3, 3, 4);
  const auto val = tiny_videos(1, 1, 99);
  const auto a = train_fold(videos, {}, ModelConfig::toy(), quick_config(3));
  const auto b = train_fold(videos, {}, ModelConfig::toy(), quick_config(3));
  REQUIRE(a.history.size() == 3);
  for (int e = 0; e < 3; ++e) {
    CHECK(a.history[e].train_loss == b.history[e].train_loss);
    CHECK(a.history[e].train_loss >= 0.0);
    CHECK(a.history[e].train_accuracy >= 0.0);
    CHECK(a.history[e].train_accuracy <= 1.0);
  }
  CHECK(a.checkpoint.parameters == b.checkpoint.parameters);
  CHECK(a.best_epoch == 3);

  TrainConfig other = quick_config(3);
  other.seed = 6;
  CHECK(train_fold(videos, {}, ModelConfig::toy(), other).history[0].train_loss != a.history[0].train_loss);
}

TEST_CASE("best checkpoint follows validation accuracy") {
  auto all = tiny_videos(4, 4, 8);
  const std::vector<SamplePtr> train(all.begin(), all.begin() + 6);
  const std::vector<SamplePtr> val(all.begin() + 6, all.end());
  int calls = 0;
  const auto r = train_fold(train, val, ModelConfig::toy(), quick_config(4),
                            [&](const EpochRecord&) { ++calls; });
  CHECK(calls == 4);
  double best = -1.0;
  for (const auto& rec : r.history) {
    REQUIRE(rec.val_metrics.has_value());
    best = std::max(best, *rec.val_metrics->accuracy);
  }
  CHECK(*r.history[r.best_epoch - 1].val_metrics->accuracy == best);
  CHECK(r.checkpoint.epoch == r.best_epoch);
}

TEST_CASE("training refuses leaking or empty inputs") {
  const auto videos = tiny_videos(2, 2, 5);
  const std::vector<SamplePtr> val{videos[1]};
  CHECK_THROWS_AS(train_fold(videos, val, ModelConfig::toy(), quick_config(1)), LeakageError);
  CHECK_THROWS_AS(train_fold({}, val, ModelConfig::toy(), quick_config(1)), ArgumentError);
}

TEST_CASE("block random selection is redrawn every epoch") {
  const BlockPartition part = partition_blocks(32, 16);
  for (const std::string id : {"a", "b", "c", "video_17"}) {
    std::set<std::vector<int>> seen;
    for (int epoch = 1; epoch <= 5; ++epoch) {
      seen.insert(block_random_select(part, sampling_seed(5, epoch, id)).indices);
    }
    CHECK(seen.size() > 1);
  }
  CHECK(sampling_seed(5, 1, "a") != sampling_seed(5, 1, "b"));
  CHECK(sampling_seed(5, 1, "a") == sampling_seed(5, 1, "a"));

  const auto videos = tiny_videos(2, 2, 6);
  TrainConfig fixed = quick_config(2);
  fixed.use_brs = false;
  CHECK(train_fold(videos, {}, ModelConfig::toy(), fixed).history[1].train_loss !=
        train_fold(videos, {}, ModelConfig::toy(), quick_config(2)).history[1].train_loss);
}

TEST_CASE("five-fold cross-validation") {
  SyntheticSpec spec = testing::tiny_spec(5, 5, 10);
  const auto videos = testing::to_ptrs(synthesize_in_memory(spec));
  DatasetManifest manifest;
  for (const auto& v : videos) manifest.entries.push_back({v->id, v->id + ".avi", v->label, v->view});
  const FoldSplit split = make_fold_splits(manifest, 5, 2);
  const CVReport report = run_cross_validation(videos, split, ModelConfig::toy(), quick_config(1));
  REQUIRE(report.folds.size() == 5);
  CHECK(report.k == 5);
  CHECK(report.aggregate.size() == metric_names().size());
  for (const auto& fold : report.folds) {
    CHECK(fold.records.size() == 2);
    for (const auto& rec : fold.records) CHECK(split.assignments.at(rec.id) == fold.fold);
    CHECK(fold.metrics.n == 2);
  }
  std::vector<std::optional<double>> acc;
  for (const auto& f : report.folds) acc.push_back(f.metrics.accuracy);
  CHECK(*report.aggregate.at("accuracy").mean == doctest::Approx(*mean_std(acc).mean));

  FoldSplit broken = split;
  broken.assignments.erase(broken.assignments.begin());
  CHECK_THROWS(run_cross_validation(videos, broken, ModelConfig::toy(), quick_config(1)));
}

TEST_CASE("epoch log lines are standalone JSON") {
  testing::TempDir dir("log");
  EpochRecord r;
  r.epoch = 2;
  r.train_loss = 0.5;
  r.train_accuracy = 0.75;
  append_epoch_log(r, dir / "log.jsonl");
  append_epoch_log(r, dir / "log.jsonl");
  std::ifstream in(dir / "log.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("epoch") == 2);
    CHECK(j.at("train_loss") == 0.5);
    ++lines;
  }
  CHECK(lines == 2);
}
