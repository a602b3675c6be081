#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "echomil/dataset.hpp"
#include "echomil/model.hpp"
#include "echomil/video.hpp"

namespace testing {

/// Hand-rolled generator wrapper used by the property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
  bool coin() { return integer(0, 1) == 1; }
  echomil::Label label() { return coin() ? echomil::Label::positive : echomil::Label::negative; }
  std::uint64_t u64() { return rng_(); }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Small synthetic spec suited to fast tests.
echomil::SyntheticSpec tiny_spec(int positives, int negatives, std::uint64_t seed);

std::vector<echomil::SamplePtr> to_ptrs(std::vector<echomil::VideoSample> samples);

/// Random uint8 video with T frames of size h x w.
echomil::FrameStack random_video(Gen& gen, int frames, int height, int width);

/// Toy model shrunk further for gradient checks.
echomil::ModelConfig micro_config();

}  // namespace testing

namespace testing {

/// Finite-difference agreement for piecewise-smooth functions. Away from a
/// ReLU or max-pool kink the central difference must match; when a kink lies
/// inside the step the analytic value equals one of the one-sided slopes.
inline bool matches_difference(double analytic, double central, double left, double right, double tol) {
  const auto close = [&](double numeric) {
    return std::abs(analytic - numeric) <= tol * std::max(1.0, std::abs(numeric));
  };
  return close(central) || close(left) || close(right);
}

}  // namespace testing
