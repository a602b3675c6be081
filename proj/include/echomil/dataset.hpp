#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "echomil/video.hpp"

namespace echomil {

struct ManifestEntry {
  std::string id;
  std::string path;  // relative paths resolve against the manifest directory
  Label label = Label::negative;
  ViewTag view = ViewTag::synthetic;
};

struct ClassCounts {
  int positive = 0;
  int negative = 0;
  int total() const { return positive + negative; }
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;

  ClassCounts class_counts() const;
  const ManifestEntry& find(const std::string& id) const;
  std::filesystem::path resolve(const ManifestEntry& entry) const;
  /// Keeps entries whose ids are listed, in manifest order.
  DatasetManifest subset(const std::set<std::string>& ids) const;
};

/// CSV with header `id,path,label,view`; labels are the literals -1 / 1.
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

using SamplePtr = std::shared_ptr<const VideoSample>;

/// Decodes every manifest entry, optionally on several threads. Output order
/// follows the manifest.
std::vector<SamplePtr> load_dataset(const DatasetManifest& manifest, int workers = 1);

struct FoldSplit {
  int k = 0;
  std::uint64_t seed = 0;
  std::map<std::string, int> assignments;

  std::vector<std::string> fold_ids(int fold) const;
  std::set<std::string> ids_outside(int fold) const;
};

FoldSplit make_fold_splits(const DatasetManifest& manifest, int k, std::uint64_t seed);

/// Throws ArgumentError unless the split covers the manifest exactly with
/// disjoint, stratified folds.
void validate_fold_split(const FoldSplit& split, const DatasetManifest& manifest);

/// Throws LeakageError if any id appears in both sets.
void check_disjoint(const std::vector<std::string>& train_ids,
                    const std::vector<std::string>& val_ids);

void write_fold_split(const FoldSplit& split, const std::filesystem::path& path);
FoldSplit read_fold_split(const std::filesystem::path& path);

// ------------------------------------------------------------- synthetic

struct NormalizedRect {
  double x0 = 0.25;
  double y0 = 0.25;
  double x1 = 0.75;
  double y1 = 0.75;
};

struct SyntheticSpec {
  int num_positive = 30;
  int num_negative = 30;
  int frames_per_video = 48;
  int frame_size = 112;
  int event_min_len = 4;
  int event_max_len = 12;
  NormalizedRect patch_region;
  double patch_fraction = 0.3;  // patch side relative to frame_size
  double noise_level = 0.08;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Ground truth for one generated video. Negatives have event_len == 0 and
/// no patch.
struct EventTruth {
  std::string id;
  int event_start = 0;
  int event_len = 0;
  std::optional<std::array<int, 4>> patch;  // x0, y0, x1, y1 in pixels, half-open

  bool in_event(int frame) const {
    return event_len > 0 && frame >= event_start && frame < event_start + event_len;
  }
};

struct SyntheticDataset {
  DatasetManifest manifest;
  std::vector<EventTruth> events;
};

/// Renders video `index` of the dataset in memory.
VideoSample render_synthetic_video(const SyntheticSpec& spec, int index, Label label,
                                   EventTruth* truth = nullptr);

/// Labels in generation order (shuffled deterministically from the seed).
std::vector<Label> synthetic_labels(const SyntheticSpec& spec);

/// Writes `<id>.avi` files, `manifest.csv` and `events.json` into out_dir.
SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec,
                                            const std::filesystem::path& out_dir);

/// In-memory equivalent of generate_synthetic_dataset (no files).
std::vector<VideoSample> synthesize_in_memory(const SyntheticSpec& spec,
                                              std::vector<EventTruth>* events = nullptr);

void write_events(const std::vector<EventTruth>& events, const std::filesystem::path& path);
std::vector<EventTruth> read_events(const std::filesystem::path& path);

/// Pixel scan: true when frame t contains strongly colored pixels. Background
/// content is strictly grayscale, so any saturated pixel belongs to a patch.
bool frame_has_event_patch(const FrameStack& frames, int t);

}  // namespace echomil
