#include "echomil/video.hpp"

#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "echomil/errors.hpp"
#include "echomil/seed.hpp"

namespace echomil {

namespace fs = std::filesystem;

Label label_from_int(int value) {
  if (value == -1) return Label::negative;
  if (value == 1) return Label::positive;
  throw ArgumentError("label must be -1 or 1, got " + std::to_string(value));
}

std::string to_string(ViewTag view) {
  switch (view) {
    case ViewTag::subAS: return "subAS";
    case ViewTag::LPS4C: return "LPS4C";
    case ViewTag::synthetic: return "synthetic";
  }
  return "synthetic";
}

ViewTag view_from_string(const std::string& text) {
  if (text == "subAS") return ViewTag::subAS;
  if (text == "LPS4C") return ViewTag::LPS4C;
  if (text == "synthetic") return ViewTag::synthetic;
  throw ArgumentError("unknown view tag '" + text + "'");
}

namespace {

constexpr std::uint32_t kCacheMagic = 0x464D4345;  // "ECMF"

fs::path cache_entry(const fs::path& path) {
  const char* dir = std::getenv("ECHOMIL_CACHE");
  if (dir == nullptr || *dir == '\0') return {};
  std::error_code ec;
  const auto abs = fs::absolute(path, ec).string();
  const auto size = fs::file_size(path, ec);
  const auto mtime = fs::last_write_time(path, ec).time_since_epoch().count();
  std::uint64_t key = hash_string(abs);
  key = mix_seed(key, static_cast<std::uint64_t>(size));
  key = mix_seed(key, static_cast<std::uint64_t>(mtime));
  std::ostringstream name;
  name << std::hex << key << ".frames";
  return fs::path(dir) / name.str();
}

bool read_cache(const fs::path& entry, FrameStack& out) {
  std::ifstream in(entry, std::ios::binary);
  if (!in) return false;
  std::uint32_t magic = 0;
  std::int32_t dims[3] = {0, 0, 0};
  in.read(reinterpret_cast<char*>(&magic), sizeof magic);
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  if (!in || magic != kCacheMagic || dims[0] < 1 || dims[1] < 1 || dims[2] < 1) return false;
  FrameStack frames(dims[0], dims[1], dims[2]);
  in.read(reinterpret_cast<char*>(frames.pixels.data()),
          static_cast<std::streamsize>(frames.pixels.size()));
  if (!in) return false;
  out = std::move(frames);
  return true;
}

void write_cache(const fs::path& entry, const FrameStack& frames) {
  std::error_code ec;
  fs::create_directories(entry.parent_path(), ec);
  const fs::path tmp = entry.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) return;
    const std::int32_t dims[3] = {frames.frames, frames.height, frames.width};
    out.write(reinterpret_cast<const char*>(&kCacheMagic), sizeof kCacheMagic);
    out.write(reinterpret_cast<const char*>(dims), sizeof dims);
    out.write(reinterpret_cast<const char*>(frames.pixels.data()),
              static_cast<std::streamsize>(frames.pixels.size()));
  }
  fs::rename(tmp, entry, ec);
}

}  // namespace

FrameStack decode_video(const fs::path& path) {
  if (!fs::is_regular_file(path)) {
    throw DecodeError("cannot decode '" + path.string() + "': file not found");
  }
  const fs::path entry = cache_entry(path);
  FrameStack cached;
  if (!entry.empty() && read_cache(entry, cached)) return cached;

  cv::VideoCapture capture(path.string(), cv::CAP_FFMPEG);
  if (!capture.isOpened()) {
    throw DecodeError("cannot decode '" + path.string() + "': unsupported or corrupt container");
  }
  FrameStack stack;
  cv::Mat bgr;
  cv::Mat rgb;
  while (capture.read(bgr)) {
    if (bgr.empty()) break;
    if (bgr.type() != CV_8UC3) {
      throw DecodeError("cannot decode '" + path.string() + "': frames are not 8-bit color");
    }
    if (stack.frames == 0) {
      stack.height = bgr.rows;
      stack.width = bgr.cols;
    } else if (bgr.rows != stack.height || bgr.cols != stack.width) {
      throw DecodeError("cannot decode '" + path.string() + "': frame size changes mid-stream");
    }
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    const auto* begin = rgb.ptr<std::uint8_t>(0);
    stack.pixels.insert(stack.pixels.end(), begin, begin + rgb.total() * 3);
    ++stack.frames;
  }
  if (stack.frames == 0) throw EmptyVideoError("video '" + path.string() + "' has no frames");
  if (!entry.empty()) write_cache(entry, stack);
  return stack;
}

VideoSample load_video(const fs::path& path, std::string id, Label label, ViewTag view) {
  VideoSample sample;
  sample.frames = decode_video(path);
  sample.id = std::move(id);
  sample.label = label;
  sample.view = view;
  sample.source_path = path.string();
  return sample;
}

void write_video(const FrameStack& frames, const fs::path& path, double fps) {
  if (frames.frames < 1) throw ArgumentError("cannot write an empty video");
  cv::VideoWriter writer(path.string(), cv::CAP_FFMPEG, cv::VideoWriter::fourcc('F', 'F', 'V', '1'),
                         fps, cv::Size(frames.width, frames.height));
  if (!writer.isOpened()) throw IoError("cannot open '" + path.string() + "' for writing");
  cv::Mat bgr;
  for (int t = 0; t < frames.frames; ++t) {
    const cv::Mat rgb(frames.height, frames.width, CV_8UC3,
                      const_cast<std::uint8_t*>(frames.frame(t)));
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    writer.write(bgr);
  }
}

FloatFrames to_float(const FrameStack& frames) {
  FloatFrames out{frames.frames, frames.height, frames.width, {}};
  out.values.assign(frames.pixels.begin(), frames.pixels.end());
  return out;
}

namespace {

void normalize_frame(const float* src, int height, int width, int target,
                     const Normalization& norm, float* dst) {
  const cv::Mat in(height, width, CV_32FC3, const_cast<float*>(src));
  cv::Mat out(target, target, CV_32FC3, dst);
  if (height == target && width == target) {
    in.copyTo(out);
  } else {
    cv::resize(in, out, cv::Size(target, target), 0, 0, cv::INTER_LINEAR);
  }
  const std::size_t n = static_cast<std::size_t>(target) * target;
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      float& v = dst[i * 3 + c];
      v = (v / 255.0f - norm.mean[c]) / norm.stddev[c];
    }
  }
}

}  // namespace

FloatFrames preprocess_frames(const FloatFrames& frames, int target_size,
                              const Normalization& norm) {
  if (target_size < 8) throw ArgumentError("target size must be at least 8");
  if (frames.frames < 1 ||
      frames.values.size() != static_cast<std::size_t>(frames.frames) * frames.height *
                                  frames.width * 3) {
    throw ArgumentError("frame stack shape does not match its data");
  }
  FloatFrames out{frames.frames, target_size, target_size, {}};
  const std::size_t in_frame = static_cast<std::size_t>(frames.height) * frames.width * 3;
  const std::size_t out_frame = static_cast<std::size_t>(target_size) * target_size * 3;
  out.values.resize(out_frame * frames.frames);
  for (int t = 0; t < frames.frames; ++t) {
    normalize_frame(frames.values.data() + t * in_frame, frames.height, frames.width,
                    target_size, norm, out.values.data() + t * out_frame);
  }
  return out;
}

FloatFrames preprocess_frames(const FrameStack& frames, int target_size,
                              const Normalization& norm) {
  return preprocess_frames(to_float(frames), target_size, norm);
}

Tensor frames_to_tensor(const FrameStack& frames, std::span<const int> indices, int target_size,
                        const Normalization& norm) {
  if (target_size < 8) throw ArgumentError("target size must be at least 8");
  const int count = static_cast<int>(indices.size());
  Tensor out(count, 3, 1, target_size, target_size);
  const std::size_t plane = static_cast<std::size_t>(target_size) * target_size;
  std::vector<float> src(frames.frame_bytes());
  std::vector<float> dst(plane * 3);
  for (int i = 0; i < count; ++i) {
    const int t = indices[i];
    if (t < 0 || t >= frames.frames) throw ArgumentError("frame index out of range");
    const std::uint8_t* f = frames.frame(t);
    std::copy(f, f + frames.frame_bytes(), src.begin());
    normalize_frame(src.data(), frames.height, frames.width, target_size, norm, dst.data());
    float* sample = out.sample(i);
    for (std::size_t p = 0; p < plane; ++p) {
      for (int c = 0; c < 3; ++c) sample[c * plane + p] = dst[p * 3 + c];
    }
  }
  return out;
}

}  // namespace echomil
