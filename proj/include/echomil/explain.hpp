#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "echomil/model.hpp"
#include "echomil/sampling.hpp"
#include "echomil/video.hpp"

namespace echomil {

inline constexpr double kOverlayAlpha = 0.4;

struct HeatmapResult {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<float> heat;           // frames x height x width, values in [0, 1]
  FrameStack overlay;                // same size as the input frames
  FrameIndexCollection collection;   // the collection that was explained
  std::vector<int> frame_indices;    // resolved source frame of each map
  Label predicted = Label::negative;
  double score = 0.0;

  float at(int j, int y, int x) const {
    return heat[(static_cast<std::size_t>(j) * height + y) * width + x];
  }
};

/// Gradient-weighted class activation maps at the last backbone stage for
/// the positive logit, computed on the highest-scoring inference collection.
/// Maps are upsampled bilinearly to frame size and divided by the largest
/// value in the video; a video whose maps are all below 1e-12 gets zeros.
/// Leaves the model's gradients zeroed.
HeatmapResult generate_heatmap(VideoClassifier& model, const FrameStack& video);

/// Writes `<video_id>_frame<j>.png` overlays and `<video_id>_heatmap.avi`.
void write_heatmap(const HeatmapResult& result, const std::string& video_id,
                   const std::filesystem::path& out_dir);

}  // namespace echomil
