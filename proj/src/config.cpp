#include "echomil/config.hpp"

#include <algorithm>

#include "echomil/errors.hpp"

namespace echomil {

using nlohmann::json;

namespace {

// Reads optional keys from one JSON object, converting type errors into
// ConfigErrors that carry the full key path.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError("'" + where_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& target) {
    keys_.emplace_back(key);
    if (!j_.contains(key)) return;
    try {
      target = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("bad value for '" + path(key) + "'");
    }
  }

  const json* child(const char* key) {
    keys_.emplace_back(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const { reject_unknown_keys(j_, keys_, where_); }

 private:
  const json& j_;
  std::string where_;
  std::vector<std::string> keys_;
};

BackboneDepth backbone_from_string(const std::string& s, const std::string& where) {
  if (s == "resnet18") return BackboneDepth::resnet18;
  if (s == "toy") return BackboneDepth::toy;
  throw ConfigError("unknown backbone '" + s + "' at '" + where + "'");
}

Fusion fusion_from_string(const std::string& s, const std::string& where) {
  if (s == "concat") return Fusion::concat;
  if (s == "sum") return Fusion::sum;
  throw ConfigError("unknown fusion '" + s + "' at '" + where + "'");
}

Optimizer optimizer_from_string(const std::string& s, const std::string& where) {
  if (s == "sgd") return Optimizer::sgd;
  if (s == "sgd_momentum") return Optimizer::sgd_momentum;
  throw ConfigError("unknown optimizer '" + s + "' at '" + where + "'");
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& where) {
  if (!j.is_object()) return;
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw ConfigError("unknown config key '" + where + "." + item.key() + "'");
    }
  }
}

json to_json(const ModelConfig& c) {
  return json{{"num_frames", c.num_frames},
              {"input_size", c.input_size},
              {"spatial_feature_dim", c.spatial_feature_dim},
              {"attention_hidden_dim", c.attention_hidden_dim},
              {"temporal_feature_dim", c.temporal_feature_dim},
              {"backbone", to_string(c.backbone)},
              {"pretrained_backbone", c.pretrained_backbone},
              {"pretrained_path", c.pretrained_path},
              {"fusion", to_string(c.fusion)},
              {"use_temporal", c.use_temporal},
              {"use_attention", c.use_attention},
              {"use_mad", c.use_mad},
              {"normalization",
               {{"mean", c.normalization.mean}, {"std", c.normalization.stddev}}}};
}

ModelConfig model_config_from_json(const json& j, const std::string& where) {
  ModelConfig c;
  Reader r(j, where);
  std::string preset;
  r.get("preset", preset);
  if (preset == "toy") {
    c = ModelConfig::toy();
  } else if (!preset.empty() && preset != "default") {
    throw ConfigError("unknown preset '" + preset + "' at '" + r.path("preset") + "'");
  }
  r.get("num_frames", c.num_frames);
  r.get("input_size", c.input_size);
  r.get("spatial_feature_dim", c.spatial_feature_dim);
  r.get("attention_hidden_dim", c.attention_hidden_dim);
  r.get("temporal_feature_dim", c.temporal_feature_dim);
  std::string text;
  r.get("backbone", text);
  if (!text.empty()) c.backbone = backbone_from_string(text, r.path("backbone"));
  r.get("pretrained_backbone", c.pretrained_backbone);
  r.get("pretrained_path", c.pretrained_path);
  text.clear();
  r.get("fusion", text);
  if (!text.empty()) c.fusion = fusion_from_string(text, r.path("fusion"));
  r.get("use_temporal", c.use_temporal);
  r.get("use_attention", c.use_attention);
  r.get("use_mad", c.use_mad);
  if (const json* norm = r.child("normalization")) {
    Reader nr(*norm, r.path("normalization"));
    nr.get("mean", c.normalization.mean);
    nr.get("std", c.normalization.stddev);
    nr.finish();
  }
  r.finish();
  return c;
}

json to_json(const TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate}, {"optimizer", to_string(c.optimizer)},
              {"momentum", c.momentum},           {"batch_size", c.batch_size},
              {"epochs", c.epochs},               {"seed", c.seed},
              {"use_brs", c.use_brs}};
}

TrainConfig train_config_from_json(const json& j, const std::string& where) {
  TrainConfig c;
  Reader r(j, where);
  r.get("learning_rate", c.learning_rate);
  std::string text;
  r.get("optimizer", text);
  if (!text.empty()) c.optimizer = optimizer_from_string(text, r.path("optimizer"));
  r.get("momentum", c.momentum);
  r.get("batch_size", c.batch_size);
  r.get("epochs", c.epochs);
  r.get("seed", c.seed);
  r.get("use_brs", c.use_brs);
  r.finish();
  return c;
}

json to_json(const SyntheticSpec& s) {
  return json{{"num_positive", s.num_positive},
              {"num_negative", s.num_negative},
              {"frames_per_video", s.frames_per_video},
              {"frame_size", s.frame_size},
              {"event_min_len", s.event_min_len},
              {"event_max_len", s.event_max_len},
              {"patch_region",
               {s.patch_region.x0, s.patch_region.y0, s.patch_region.x1, s.patch_region.y1}},
              {"patch_fraction", s.patch_fraction},
              {"noise_level", s.noise_level},
              {"seed", s.seed}};
}

SyntheticSpec synthetic_spec_from_json(const json& j, const std::string& where) {
  SyntheticSpec s;
  Reader r(j, where);
  r.get("num_positive", s.num_positive);
  r.get("num_negative", s.num_negative);
  r.get("frames_per_video", s.frames_per_video);
  r.get("frame_size", s.frame_size);
  r.get("event_min_len", s.event_min_len);
  r.get("event_max_len", s.event_max_len);
  std::array<double, 4> region{s.patch_region.x0, s.patch_region.y0, s.patch_region.x1,
                               s.patch_region.y1};
  r.get("patch_region", region);
  s.patch_region = {region[0], region[1], region[2], region[3]};
  r.get("patch_fraction", s.patch_fraction);
  r.get("noise_level", s.noise_level);
  r.get("seed", s.seed);
  r.finish();
  return s;
}

json to_json(const MetricsReport& m) {
  return json{{"accuracy", optional_json(m.accuracy)},
              {"sensitivity", optional_json(m.sensitivity)},
              {"specificity", optional_json(m.specificity)},
              {"f1", optional_json(m.f1)},
              {"auc", optional_json(m.auc)},
              {"ppv", optional_json(m.ppv)},
              {"npv", optional_json(m.npv)},
              {"counts",
               {{"tp", m.counts.tp}, {"tn", m.counts.tn}, {"fp", m.counts.fp}, {"fn", m.counts.fn}}},
              {"n", m.n}};
}

json to_json(const MeanStd& v) {
  return json{{"mean", optional_json(v.mean)},
              {"std", optional_json(v.stddev)},
              {"text", format_mean_std(v)}};
}

}  // namespace echomil
