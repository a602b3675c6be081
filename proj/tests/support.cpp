#include "support.hpp"

#include <atomic>
#include <chrono>
#include <unistd.h>

namespace testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  path_ = fs::temp_directory_path() /
          ("echomil_" + tag + "_" + std::to_string(::getpid()) + "_" +
           std::to_string(stamp) + "_" + std::to_string(counter++));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

echomil::SyntheticSpec tiny_spec(int positives, int negatives, std::uint64_t seed) {
  echomil::SyntheticSpec s;
  s.num_positive = positives;
  s.num_negative = negatives;
  s.frames_per_video = 32;
  s.frame_size = 48;
  s.event_min_len = 4;
  s.event_max_len = 8;
  s.seed = seed;
  return s;
}

std::vector<echomil::SamplePtr> to_ptrs(std::vector<echomil::VideoSample> samples) {
  std::vector<echomil::SamplePtr> out;
  for (auto& s : samples) out.push_back(std::make_shared<const echomil::VideoSample>(std::move(s)));
  return out;
}

echomil::FrameStack random_video(Gen& gen, int frames, int height, int width) {
  echomil::FrameStack v(frames, height, width);
  for (auto& p : v.pixels) p = static_cast<std::uint8_t>(gen.integer(0, 255));
  return v;
}

echomil::ModelConfig micro_config() {
  auto c = echomil::ModelConfig::toy();
  c.num_frames = 4;
  c.input_size = 8;
  c.spatial_feature_dim = 8;
  c.attention_hidden_dim = 6;
  c.temporal_feature_dim = 8;
  return c;
}

}  // namespace testing
