#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "echomil/dataset.hpp"
#include "echomil/errors.hpp"
#include "echomil/seed.hpp"

namespace echomil {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kChromaThreshold = 100;
constexpr int kMinPatchPixels = 4;

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

std::string synthetic_id(int index) {
  std::ostringstream s;
  s << "syn_" << std::setw(4) << std::setfill('0') << index;
  return s.str();
}

struct PixelBounds {
  int x0, y0, x1, y1;
};

PixelBounds region_pixels(const SyntheticSpec& spec) {
  const int s = spec.frame_size;
  return {static_cast<int>(std::ceil(spec.patch_region.x0 * s)),
          static_cast<int>(std::ceil(spec.patch_region.y0 * s)),
          static_cast<int>(std::floor(spec.patch_region.x1 * s)),
          static_cast<int>(std::floor(spec.patch_region.y1 * s))};
}

int patch_side(const SyntheticSpec& spec) {
  return std::max(2, static_cast<int>(std::lround(spec.patch_fraction * spec.frame_size)));
}

}  // namespace

void SyntheticSpec::validate() const {
  if (num_positive < 0 || num_negative < 0) throw ArgumentError("sample counts must be >= 0");
  if (frames_per_video < 1) throw ArgumentError("frames_per_video must be >= 1");
  if (frame_size < 8) throw ArgumentError("frame_size must be >= 8");
  if (event_min_len < 1 || event_min_len > event_max_len || event_max_len > frames_per_video) {
    throw ArgumentError("event window must satisfy 1 <= min_len <= max_len <= frames_per_video");
  }
  if (noise_level < 0.0 || noise_level > 1.0) throw ArgumentError("noise_level must be in [0, 1]");
  const auto& r = patch_region;
  if (!(0.0 <= r.x0 && r.x0 < r.x1 && r.x1 <= 1.0 && 0.0 <= r.y0 && r.y0 < r.y1 && r.y1 <= 1.0)) {
    throw ArgumentError("patch_region must be a rectangle inside [0, 1]^2");
  }
  if (patch_fraction <= 0.0 || patch_fraction > 1.0) {
    throw ArgumentError("patch_fraction must be in (0, 1]");
  }
  const auto px = region_pixels(*this);
  const int side = patch_side(*this);
  if (px.x1 - px.x0 < side || px.y1 - px.y0 < side) {
    throw ArgumentError("patch_region is too small for the event patch");
  }
}

std::vector<Label> synthetic_labels(const SyntheticSpec& spec) {
  std::vector<Label> labels;
  labels.insert(labels.end(), spec.num_positive, Label::positive);
  labels.insert(labels.end(), spec.num_negative, Label::negative);
  std::mt19937_64 rng(mix_seed(spec.seed, 0xC1A55ULL));
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

VideoSample render_synthetic_video(const SyntheticSpec& spec, int index, Label label,
                                   EventTruth* truth) {
  spec.validate();
  std::mt19937_64 rng(mix_seed(spec.seed, static_cast<std::uint64_t>(index) + 1));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const int T = spec.frames_per_video;
  const int S = spec.frame_size;

  // A soft-edged gray ellipse whose radii oscillate, loosely imitating a
  // beating chamber, plus a fainter static ring.
  const double background = uniform(15.0, 45.0);
  const double foreground = uniform(110.0, 170.0);
  const double cx = S * uniform(0.42, 0.58);
  const double cy = S * uniform(0.42, 0.58);
  const double rx0 = S * uniform(0.18, 0.26);
  const double ry0 = S * uniform(0.18, 0.26);
  const double period = uniform(10.0, 20.0);
  const double phase = uniform(0.0, 2.0 * std::numbers::pi);
  const double ring_radius = S * uniform(0.34, 0.42);
  const double ring_level = uniform(40.0, 80.0);

  EventTruth gt;
  gt.id = synthetic_id(index);
  PixelBounds patch{0, 0, 0, 0};
  bool red = true;
  if (label == Label::positive) {
    std::uniform_int_distribution<int> len(spec.event_min_len, spec.event_max_len);
    gt.event_len = len(rng);
    std::uniform_int_distribution<int> start(0, T - gt.event_len);
    gt.event_start = start(rng);
    const auto region = region_pixels(spec);
    const int side = patch_side(spec);
    std::uniform_int_distribution<int> px(region.x0, region.x1 - side);
    std::uniform_int_distribution<int> py(region.y0, region.y1 - side);
    patch.x0 = px(rng);
    patch.y0 = py(rng);
    patch.x1 = patch.x0 + side;
    patch.y1 = patch.y0 + side;
    gt.patch = std::array<int, 4>{patch.x0, patch.y0, patch.x1, patch.y1};
    red = unit(rng) < 0.5;
  }

  VideoSample sample;
  sample.id = gt.id;
  sample.label = label;
  sample.view = ViewTag::synthetic;
  sample.frames = FrameStack(T, S, S);
  std::normal_distribution<double> noise(0.0, spec.noise_level * 255.0);
  std::uniform_int_distribution<int> strong(200, 255);
  std::uniform_int_distribution<int> weak(0, 40);
  std::uniform_int_distribution<int> mid(30, 90);

  for (int t = 0; t < T; ++t) {
    const double beat = std::sin(2.0 * std::numbers::pi * t / period + phase);
    const double rx = rx0 * (1.0 + 0.2 * beat);
    const double ry = ry0 * (1.0 + 0.2 * std::sin(2.0 * std::numbers::pi * t / period + phase + 0.6));
    const bool event = gt.in_event(t);
    for (int y = 0; y < S; ++y) {
      for (int x = 0; x < S; ++x) {
        const double dx = (x + 0.5 - cx) / rx;
        const double dy = (y + 0.5 - cy) / ry;
        const double dist = std::sqrt(dx * dx + dy * dy);
        const double blob = 1.0 / (1.0 + std::exp(-(1.0 - dist) / 0.08));
        const double rdist = std::hypot(x + 0.5 - cx, y + 0.5 - cy) - ring_radius;
        const double ring = std::exp(-rdist * rdist / 18.0);
        const double value = background + (foreground - background) * blob +
                             ring_level * ring + noise(rng);
        std::uint8_t* p = sample.frames.pixel(t, y, x);
        const std::uint8_t gray = to_byte(value);
        p[0] = p[1] = p[2] = gray;
        if (event && x >= patch.x0 && x < patch.x1 && y >= patch.y0 && y < patch.y1) {
          if (red) {
            p[0] = static_cast<std::uint8_t>(strong(rng));
            p[1] = static_cast<std::uint8_t>(weak(rng));
            p[2] = static_cast<std::uint8_t>(weak(rng));
          } else {
            p[0] = static_cast<std::uint8_t>(weak(rng));
            p[1] = static_cast<std::uint8_t>(mid(rng));
            p[2] = static_cast<std::uint8_t>(strong(rng));
          }
        }
      }
    }
  }
  if (truth) *truth = gt;
  return sample;
}

std::vector<VideoSample> synthesize_in_memory(const SyntheticSpec& spec,
                                              std::vector<EventTruth>* events) {
  spec.validate();
  const auto labels = synthetic_labels(spec);
  std::vector<VideoSample> out;
  out.reserve(labels.size());
  if (events) events->clear();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    EventTruth gt;
    out.push_back(render_synthetic_video(spec, static_cast<int>(i), labels[i], &gt));
    if (events) events->push_back(gt);
  }
  return out;
}

SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec, const fs::path& out_dir) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw IoError("cannot create output directory '" + out_dir.string() + "'");
  }
  SyntheticDataset ds;
  ds.manifest.base_dir = out_dir;
  const auto labels = synthetic_labels(spec);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    EventTruth gt;
    VideoSample v = render_synthetic_video(spec, static_cast<int>(i), labels[i], &gt);
    const std::string file = v.id + ".avi";
    write_video(v.frames, out_dir / file);
    ds.manifest.entries.push_back({v.id, file, v.label, ViewTag::synthetic});
    ds.events.push_back(gt);
  }
  write_manifest(ds.manifest, out_dir / "manifest.csv");
  write_events(ds.events, out_dir / "events.json");
  return ds;
}

void write_events(const std::vector<EventTruth>& events, const fs::path& path) {
  json arr = json::array();
  for (const auto& e : events) {
    json j{{"id", e.id}, {"event_start", e.event_start}, {"event_len", e.event_len}};
    if (e.patch) j["patch"] = *e.patch;
    arr.push_back(std::move(j));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << arr.dump(2) << '\n';
}

std::vector<EventTruth> read_events(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::vector<EventTruth> events;
  try {
    for (const auto& j : json::parse(in)) {
      EventTruth e;
      e.id = j.at("id").get<std::string>();
      e.event_start = j.at("event_start").get<int>();
      e.event_len = j.at("event_len").get<int>();
      if (j.contains("patch")) e.patch = j.at("patch").get<std::array<int, 4>>();
      events.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ArgumentError("malformed events sidecar '" + path.string() + "': " + e.what());
  }
  return events;
}

bool frame_has_event_patch(const FrameStack& frames, int t) {
  int colored = 0;
  const std::uint8_t* f = frames.frame(t);
  const std::size_t n = static_cast<std::size_t>(frames.height) * frames.width;
  for (std::size_t i = 0; i < n; ++i) {
    const auto [lo, hi] = std::minmax({f[3 * i], f[3 * i + 1], f[3 * i + 2]});
    if (hi - lo > kChromaThreshold && ++colored >= kMinPatchPixels) return true;
  }
  return false;
}

}  // namespace echomil
