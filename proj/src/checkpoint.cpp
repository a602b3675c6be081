#include "echomil/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>

#include "echomil/config.hpp"
#include "echomil/errors.hpp"

namespace echomil {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'E', 'M', 'I', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T read_pod(std::ifstream& in, const fs::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof value)) {
    throw StateError("truncated checkpoint '" + path.string() + "'");
  }
  return value;
}

}  // namespace

fs::path sidecar_path(const fs::path& path) { return fs::path(path.string() + ".json"); }

void save_checkpoint(const Checkpoint& checkpoint, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const json header{{"model", to_json(checkpoint.model_config)},
                    {"train", to_json(checkpoint.train_config)},
                    {"epoch", checkpoint.epoch},
                    {"rng_state", checkpoint.rng_state}};
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(kMagic, sizeof kMagic);
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_pod(out, static_cast<std::uint64_t>(checkpoint.parameters.size()));
  out.write(reinterpret_cast<const char*>(checkpoint.parameters.data()),
            static_cast<std::streamsize>(checkpoint.parameters.size() * sizeof(float)));
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");

  const json sidecar{{"config", to_json(checkpoint.model_config)},
                     {"seed", checkpoint.train_config.seed},
                     {"epoch", checkpoint.epoch}};
  std::ofstream side(sidecar_path(path));
  if (!side) throw IoError("cannot write '" + sidecar_path(path).string() + "'");
  side << sidecar.dump(2) << '\n';
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StateError("checkpoint '" + path.string() + "' not found");
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw StateError("'" + path.string() + "' is not a checkpoint");
  }
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != kVersion) {
    throw StateError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = read_pod<std::uint32_t>(in, path);
  std::string text(header_len, '\0');
  if (!in.read(text.data(), header_len)) throw StateError("truncated checkpoint header");
  Checkpoint ck;
  try {
    const json header = json::parse(text);
    ck.model_config = model_config_from_json(header.at("model"));
    ck.train_config = train_config_from_json(header.at("train"));
    ck.epoch = header.at("epoch").get<int>();
    ck.rng_state = header.at("rng_state").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw StateError("corrupt checkpoint header: " + std::string(e.what()));
  }
  const auto count = read_pod<std::uint64_t>(in, path);
  ck.parameters.resize(count);
  if (!in.read(reinterpret_cast<char*>(ck.parameters.data()),
               static_cast<std::streamsize>(count * sizeof(float)))) {
    throw StateError("truncated checkpoint parameters");
  }
  return ck;
}

VideoClassifier make_classifier(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  VideoClassifier model(config, seed);
  if (config.pretrained_backbone) {
    const Checkpoint source = load_checkpoint(config.pretrained_path);
    ModelConfig source_cfg = source.model_config;
    source_cfg.pretrained_backbone = false;
    VideoClassifier donor(source_cfg, 0);
    donor.load_state(source.parameters);
    model.load_backbone_state(donor.backbone_state());
  }
  return model;
}

VideoClassifier classifier_from_checkpoint(const Checkpoint& checkpoint) {
  ModelConfig cfg = checkpoint.model_config;
  cfg.pretrained_backbone = false;
  cfg.validate();
  VideoClassifier model(cfg, 0);
  model.load_state(checkpoint.parameters);
  return model;
}

Checkpoint make_checkpoint(const VideoClassifier& model, const TrainConfig& train_config,
                           int epoch, std::uint64_t rng_state) {
  Checkpoint ck;
  ck.model_config = model.config();
  ck.train_config = train_config;
  ck.epoch = epoch;
  ck.rng_state = rng_state;
  ck.parameters = model.state();
  return ck;
}

}  // namespace echomil
