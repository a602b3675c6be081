#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "echomil/tensor.hpp"

namespace echomil {

enum class Label : int { negative = -1, positive = 1 };

inline int to_int(Label l) { return static_cast<int>(l); }
Label label_from_int(int value);
/// Maps {-1, +1} onto the {0, 1} target of the classifier.
inline double label_target(Label l) { return l == Label::positive ? 1.0 : 0.0; }

enum class ViewTag { subAS, LPS4C, synthetic };

std::string to_string(ViewTag view);
ViewTag view_from_string(const std::string& text);

/// T x H x W x 3 stack of 8-bit RGB frames.
struct FrameStack {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  FrameStack() = default;
  FrameStack(int t, int h, int w)
      : frames(t), height(h), width(w),
        pixels(static_cast<std::size_t>(t) * h * w * 3, 0) {}

  std::size_t frame_bytes() const { return static_cast<std::size_t>(height) * width * 3; }
  std::uint8_t* frame(int t) { return pixels.data() + t * frame_bytes(); }
  const std::uint8_t* frame(int t) const { return pixels.data() + t * frame_bytes(); }
  std::uint8_t* pixel(int t, int y, int x) {
    return frame(t) + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  const std::uint8_t* pixel(int t, int y, int x) const {
    return frame(t) + (static_cast<std::size_t>(y) * width + x) * 3;
  }
};

/// One video: the bag of frames plus its label. Immutable once loaded.
struct VideoSample {
  std::string id;
  FrameStack frames;
  Label label = Label::negative;
  ViewTag view = ViewTag::synthetic;
  std::string source_path;
};

/// Float frames in T x H x W x 3 layout.
struct FloatFrames {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<float> values;

  float at(int t, int y, int x, int c) const {
    return values[((static_cast<std::size_t>(t) * height + y) * width + x) * 3 + c];
  }
};

/// Fixed per-channel standardization constants (RGB order).
struct Normalization {
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> stddev{0.229f, 0.224f, 0.225f};
};

/// Decodes every frame of a video container. Honors ECHOMIL_CACHE: when set,
/// decoded frames are memoized as raw files keyed by path, size and mtime.
FrameStack decode_video(const std::filesystem::path& path);

/// decode_video plus manifest metadata.
VideoSample load_video(const std::filesystem::path& path, std::string id, Label label,
                       ViewTag view);

/// Writes a lossless (FFV1) AVI.
void write_video(const FrameStack& frames, const std::filesystem::path& path, double fps = 25.0);

FloatFrames to_float(const FrameStack& frames);

/// Bilinear resize to target x target, scale by 1/255, then standardize each
/// channel. Applying it twice standardizes twice; it is not idempotent.
FloatFrames preprocess_frames(const FloatFrames& frames, int target_size,
                              const Normalization& norm);
FloatFrames preprocess_frames(const FrameStack& frames, int target_size,
                              const Normalization& norm);

/// Preprocesses the listed frames into a (count, 3, 1, S, S) network input.
Tensor frames_to_tensor(const FrameStack& frames, std::span<const int> indices,
                        int target_size, const Normalization& norm);

}  // namespace echomil
