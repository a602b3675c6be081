#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "echomil/explain.hpp"
#include "support.hpp"

using namespace echomil;

TEST_CASE("heat maps have frame shape and unit peak") {
  VideoClassifier model(ModelConfig::toy(), 1);
  testing::Gen gen(1);
  for (int t : {16, 35, 48}) {
    const FrameStack video = testing::random_video(gen, t, 40, 56);
    const HeatmapResult r = generate_heatmap(model, video);
    CHECK(r.frames == 16);
    CHECK(r.height == 40);
    CHECK(r.width == 56);
    CHECK(r.heat.size() == 16u * 40 * 56);
    CHECK(r.overlay.frames == 16);
    CHECK(r.overlay.height == 40);
    CHECK(r.overlay.width == 56);
    CHECK(r.frame_indices.size() == 16);
    const auto [lo, hi] = std::minmax_element(r.heat.begin(), r.heat.end());
    CHECK(*lo >= 0.0f);
    CHECK(*hi == doctest::Approx(1.0));
    for (nn::Param* p : model.parameters()) {
      CHECK(std::all_of(p->grad.begin(), p->grad.end(), [](float g) { return g == 0.0f; }));
    }
  }
}

TEST_CASE("heat maps explain the highest-scoring collection") {
  VideoClassifier model(ModelConfig::toy(), 2);
  testing::Gen gen(2);
  const FrameStack video = testing::random_video(gen, 48, 32, 32);
  const HeatmapResult r = generate_heatmap(model, video);
  const Prediction p = predict_video(model, video);
  const auto best = std::max_element(p.collection_scores.begin(), p.collection_scores.end()) -
                    p.collection_scores.begin();
  CHECK(r.collection.indices == block_inference_collections(partition_blocks(48, 16))[best].indices);
  CHECK(r.predicted == p.final_label);
  CHECK(r.score == doctest::Approx(p.final_score));
}

TEST_CASE("zero gradients give an all-zero map") {
  VideoClassifier model(ModelConfig::toy(), 3);
  std::fill(model.head().weight.value.begin(), model.head().weight.value.end(), 0.0f);
  testing::Gen gen(3);
  const HeatmapResult r = generate_heatmap(model, testing::random_video(gen, 16, 24, 24));
  CHECK(std::all_of(r.heat.begin(), r.heat.end(), [](float v) { return v == 0.0f; }));
}

TEST_CASE("heat maps are deterministic") {
  testing::Gen gen(4);
  const FrameStack video = testing::random_video(gen, 32, 32, 32);
  VideoClassifier a(ModelConfig::toy(), 4), b(ModelConfig::toy(), 4);
  const HeatmapResult ra = generate_heatmap(a, video);
  CHECK(ra.heat == generate_heatmap(b, video).heat);
  CHECK(ra.heat == generate_heatmap(a, video).heat);
  CHECK(ra.overlay.pixels == generate_heatmap(a, video).overlay.pixels);
}

TEST_CASE("overlay blends the source frame") {
  VideoClassifier model(ModelConfig::toy(), 5);
  FrameStack video(16, 24, 24);
  std::fill(video.pixels.begin(), video.pixels.end(), 200);
  const HeatmapResult r = generate_heatmap(model, video);
  for (int j = 0; j < r.frames; ++j) {
    for (int y = 0; y < r.height; ++y) {
      for (int x = 0; x < r.width; ++x) {
        const std::uint8_t* px = r.overlay.pixel(j, y, x);
        // 0.6 of the source plus 0.4 of a colormap entry in [0, 255].
        for (int c = 0; c < 3; ++c) {
          REQUIRE(px[c] >= 119);
          REQUIRE(px[c] <= 222);
        }
      }
    }
  }
}

TEST_CASE("heat map files") {
  testing::TempDir dir("heat");
  VideoClassifier model(ModelConfig::toy(), 6);
  testing::Gen gen(6);
  const HeatmapResult r = generate_heatmap(model, testing::random_video(gen, 16, 24, 24));
  write_heatmap(r, "clip", dir.path());
  for (int j = 0; j < 16; ++j) CHECK(std::filesystem::exists(dir / ("clip_frame" + std::to_string(j) + ".png")));
  const FrameStack back = decode_video(dir / "clip_heatmap.avi");
  CHECK(back.frames == 16);
  CHECK(back.pixels == r.overlay.pixels);
}
