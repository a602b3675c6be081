#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "echomil/model.hpp"
#include "echomil/train_config.hpp"

namespace echomil {

/// A trained model. On disk: a binary parameter blob at `path` plus a JSON
/// sidecar at `path + ".json"` of the form {"config": {...}, "seed": int, "epoch": int}.
struct Checkpoint {
  ModelConfig model_config;
  TrainConfig train_config;
  int epoch = 0;
  std::uint64_t rng_state = 0;
  std::vector<float> parameters;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

/// Throws StateError when the file is missing or does not parse.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& path);

/// Freshly initialized model; copies backbone weights from
/// config.pretrained_path when config.pretrained_backbone is set.
VideoClassifier make_classifier(const ModelConfig& config, std::uint64_t seed);

VideoClassifier classifier_from_checkpoint(const Checkpoint& checkpoint);

Checkpoint make_checkpoint(const VideoClassifier& model, const TrainConfig& train_config,
                           int epoch, std::uint64_t rng_state);

}  // namespace echomil
