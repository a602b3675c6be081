#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "echomil/cli.hpp"
#include "support.hpp"

using namespace echomil;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

// Runs the installed binary through the shell, capturing stdout and stderr.
Run run_binary(const std::string& args) {
  const std::string cmd = std::string("\"") + ECHOMIL_BINARY + "\" " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

const std::string kSmallData =
    " --set synth.num_positive=5 --set synth.num_negative=5 --set synth.frames_per_video=32"
    " --set synth.frame_size=48 --set synth.event_max_len=8";
const std::string kToyTrain = " --set model.preset=toy --set train.epochs=1 --set train.batch_size=4";

}  // namespace

TEST_CASE("overrides parse JSON values and fall back to strings") {
  nlohmann::json c = nlohmann::json::object();
  apply_override(c, "train.epochs=7");
  apply_override(c, "model.preset=toy");
  apply_override(c, "model.use_mad=false");
  apply_override(c, "synth.patch_region=[0,0,0.5,0.5]");
  CHECK(c["train"]["epochs"] == 7);
  CHECK(c["model"]["preset"] == "toy");
  CHECK(c["model"]["use_mad"] == false);
  CHECK(c["synth"]["patch_region"].size() == 4);
  CHECK_THROWS(apply_override(c, "no_equals_sign"));
}

TEST_CASE("unknown config keys are rejected with their name") {
  testing::TempDir dir("cli_bad");
  std::ofstream(dir / "cfg.json") << R"({"train": {"epochs": 2, "learnin_rate": 0.1}})";
  const Run r = run_binary("synth --config " + q(dir / "cfg.json") + " --out " + q(dir / "out"));
  CHECK(r.code != 0);
  CHECK(r.output.find("learnin_rate") != std::string::npos);

  std::ostringstream out, err;
  CHECK(run_cli({"echomil", "synth", "--out", (dir / "o2").string(), "--set", "modle.fusion=sum"}, out, err) != 0);
  CHECK(err.str().find("modle") != std::string::npos);
}

TEST_CASE("missing subcommand or bad flag fails") {
  CHECK(run_binary("").code != 0);
  CHECK(run_binary("split --k 5").code != 0);
  CHECK(run_binary("--help").code == 0);
}

TEST_CASE("synth, split, cv, train, eval, predict and heatmap") {
  testing::TempDir dir("cli_flow");
  const fs::path data = dir / "data";
  Run r = run_binary("synth --seed 3 --out " + q(data) + kSmallData);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(fs::exists(data / "manifest.csv"));
  CHECK(fs::exists(data / "events.json"));
  CHECK(fs::exists(data / "config.resolved"));

  r = run_binary("split --manifest " + q(data / "manifest.csv") + " --k 5 --seed 1 --out " + q(dir / "split"));
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(fs::exists(dir / "split" / "folds.json"));

  r = run_binary("cv --manifest " + q(data / "manifest.csv") + " --out " + q(dir / "cv") + kToyTrain +
                 " --set data.folds=" + q(dir / "split" / "folds.json"));
  REQUIRE_MESSAGE(r.code == 0, r.output);
  for (const char* name : {"cv_report.json", "report.txt", "folds.json", "config.resolved", "epochs.jsonl"}) {
    CHECK_MESSAGE(fs::exists(dir / "cv" / name), name);
  }
  const auto report = nlohmann::json::parse(std::ifstream(dir / "cv" / "cv_report.json"));
  CHECK(report.at("folds").size() == 5);
  const auto resolved = nlohmann::json::parse(std::ifstream(dir / "cv" / "config.resolved"));
  CHECK(resolved.at("train").at("epochs") == 1);
  CHECK(resolved.at("data").at("folds") == (dir / "split" / "folds.json").string());

  r = run_binary("train --manifest " + q(data / "manifest.csv") + " --out " + q(dir / "train") + kToyTrain);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const fs::path ckpt = dir / "train" / "model.ckpt";
  CHECK(fs::exists(ckpt));
  CHECK(fs::exists(dir / "train" / "model.ckpt.json"));
  CHECK(fs::exists(dir / "train" / "train_log.jsonl"));

  r = run_binary("eval --checkpoint " + q(ckpt) + " --manifest " + q(data / "manifest.csv") + " --out " +
                 q(dir / "eval"));
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(fs::exists(dir / "eval" / "predictions.csv"));
  CHECK(fs::exists(dir / "eval" / "metrics.json"));
  CHECK(r.output.find("Accuracy") != std::string::npos);

  // 32 frames over 16 blocks: two collections, two votes.
  const std::string video = read_manifest(data / "manifest.csv").entries.front().path;
  r = run_binary("predict --checkpoint " + q(ckpt) + " " + q(data / video));
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const auto pred = nlohmann::json::parse(r.output);
  CHECK(pred.at("votes").size() == 2);
  CHECK(pred.at("scores").size() == 2);

  r = run_binary("heatmap --checkpoint " + q(ckpt) + " " + q(data / video) + " --out " + q(dir / "heat"));
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const std::string stem = fs::path(video).stem().string();
  CHECK(fs::exists(dir / "heat" / (stem + "_frame0.png")));
  CHECK(fs::exists(dir / "heat" / (stem + "_heatmap.avi")));

  r = run_binary("predict --checkpoint " + q(dir / "nothing.ckpt") + " " + q(data / video));
  CHECK(r.code != 0);
  CHECK(r.output.find("error:") != std::string::npos);
}

TEST_CASE("a video of exactly N frames gets one vote") {
  testing::TempDir dir("cli_one");
  Run r = run_binary("synth --seed 4 --out " + q(dir / "data") +
                     " --set synth.num_positive=2 --set synth.num_negative=2 --set synth.frames_per_video=16"
                     " --set synth.frame_size=32 --set synth.event_max_len=8");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  r = run_binary("train --manifest " + q(dir / "data" / "manifest.csv") + " --out " + q(dir / "train") +
                 kToyTrain + " --set data.k=2");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const std::string video = read_manifest(dir / "data" / "manifest.csv").entries.front().path;
  r = run_binary("predict --checkpoint " + q(dir / "train" / "model.ckpt") + " " + q(dir / "data" / video));
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(nlohmann::json::parse(r.output).at("votes").size() == 1);
}

TEST_CASE("ablation writes both tables") {
  testing::TempDir dir("cli_ablate");
  Run r = run_binary("synth --seed 5 --out " + q(dir / "data") + kSmallData);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  r = run_binary("ablate --manifest " + q(dir / "data" / "manifest.csv") + " --out " + q(dir / "ab") +
                 kToyTrain + " --set data.k=2");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const auto j = nlohmann::json::parse(std::ifstream(dir / "ab" / "ablation.json"));
  CHECK(j.at("fusion_attention").at("rows").size() == 4);
  CHECK(j.at("mad_brs").at("rows").size() == 4);
  CHECK(fs::exists(dir / "ab" / "report.txt"));
}
