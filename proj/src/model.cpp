#include "echomil/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "echomil/errors.hpp"

namespace echomil {

std::string to_string(BackboneDepth depth) {
  return depth == BackboneDepth::resnet18 ? "resnet18" : "toy";
}

std::string to_string(Fusion fusion) { return fusion == Fusion::concat ? "concat" : "sum"; }

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.num_frames = 16;
  c.input_size = 32;
  c.spatial_feature_dim = 32;
  c.attention_hidden_dim = 64;
  c.temporal_feature_dim = 32;
  c.backbone = BackboneDepth::toy;
  return c;
}

void ModelConfig::validate() const {
  if (num_frames < 1) throw ConfigError("num_frames must be >= 1");
  if (input_size < 8) throw ConfigError("input_size must be >= 8");
  if (spatial_feature_dim < 1 || attention_hidden_dim < 1 || temporal_feature_dim < 1) {
    throw ConfigError("feature dimensions must be positive");
  }
  if (backbone == BackboneDepth::resnet18 && spatial_feature_dim != 512) {
    throw ConfigError("the 18-layer backbone produces 512-d features; spatial_feature_dim must be 512");
  }
  if (backbone == BackboneDepth::resnet18 && input_size < 32) {
    throw ConfigError("the 18-layer backbone needs input_size >= 32");
  }
  if (backbone == BackboneDepth::toy && spatial_feature_dim < 4) {
    throw ConfigError("the toy backbone needs spatial_feature_dim >= 4");
  }
  if (use_temporal && fusion == Fusion::sum && spatial_feature_dim != temporal_feature_dim) {
    throw ConfigError("fusion=sum requires spatial_feature_dim == temporal_feature_dim (" +
                      std::to_string(spatial_feature_dim) + " vs " +
                      std::to_string(temporal_feature_dim) + ")");
  }
  if (use_temporal && num_frames < 2) {
    throw ConfigError("the temporal branch needs num_frames >= 2");
  }
  for (float s : normalization.stddev) {
    if (!(s > 0.0f)) throw ConfigError("normalization stddev must be positive");
  }
  if (pretrained_backbone && pretrained_path.empty()) {
    throw ConfigError("pretrained_backbone requires pretrained_path");
  }
}

std::array<int, 4> ModelConfig::stage_widths() const {
  if (backbone == BackboneDepth::resnet18) return {64, 128, 256, 512};
  const int d = spatial_feature_dim;
  return {std::max(1, d / 4), std::max(1, d / 2), d, d};
}

std::array<int, 3> ModelConfig::temporal_widths() const {
  const auto w = stage_widths();
  return {w[1], w[2], temporal_feature_dim};
}

int ModelConfig::fused_dim() const {
  if (!use_temporal) return spatial_feature_dim;
  return fusion == Fusion::concat ? spatial_feature_dim + temporal_feature_dim
                                  : spatial_feature_dim;
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ------------------------------------------------------------- Backbone2d

Backbone2d::Backbone2d(const ModelConfig& config) {
  const auto widths = config.stage_widths();
  int blocks = 1;
  if (config.backbone == BackboneDepth::resnet18) {
    stem_conv = nn::Conv3d(3, widths[0], {1, 7, 7}, {1, 2, 2}, {0, 3, 3});
    stem_pool_enabled = true;
    stem_pool = nn::MaxPool3d({1, 3, 3}, {1, 2, 2}, {0, 1, 1});
    blocks = 2;
  } else {
    stem_conv = nn::Conv3d(3, widths[0], {1, 3, 3}, {1, 1, 1}, {0, 1, 1});
  }
  stem_bn = nn::BatchNorm(widths[0]);
  int in = widths[0];
  for (int s = 0; s < 4; ++s) {
    const int stride = s == 0 ? 1 : 2;
    for (int b = 0; b < blocks; ++b) {
      const nn::Dims3 st = b == 0 ? nn::Dims3{1, stride, stride} : nn::Dims3{1, 1, 1};
      stages[s].emplace_back(in, widths[s], st, 1);
      in = widths[s];
    }
  }
}

void Backbone2d::init(std::mt19937_64& rng) {
  stem_conv.init(rng);
  for (auto& stage : stages) {
    for (auto& block : stage) block.init(rng);
  }
}

Backbone2d::Output Backbone2d::forward(const Tensor& frames, nn::Pass pass) {
  Tensor x = stem_relu_.forward(stem_bn.forward(stem_conv.forward(frames, pass), pass), pass);
  if (stem_pool_enabled) x = stem_pool.forward(x, pass);
  Output out;
  for (int s = 0; s < 4; ++s) {
    for (auto& block : stages[s]) x = block.forward(x, pass);
    if (s == 1) out.stage2 = x;
  }
  out.final_maps = std::move(x);
  return out;
}

Tensor Backbone2d::backward(const Tensor& d_final, const Tensor* d_stage2) {
  Tensor g = d_final;
  for (int s = 3; s >= 0; --s) {
    if (s == 1 && d_stage2 != nullptr) {
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += d_stage2->data[i];
    }
    for (auto it = stages[s].rbegin(); it != stages[s].rend(); ++it) g = it->backward(g);
  }
  if (stem_pool_enabled) g = stem_pool.backward(g);
  return stem_conv.backward(stem_bn.backward(stem_relu_.backward(std::move(g))));
}

void Backbone2d::collect(std::vector<nn::Param*>& params) {
  stem_conv.collect(params);
  stem_bn.collect(params);
  for (auto& stage : stages) {
    for (auto& block : stage) block.collect(params);
  }
}

void Backbone2d::collect_buffers(std::vector<std::vector<float>*>& buffers) {
  buffers.push_back(&stem_bn.running_mean);
  buffers.push_back(&stem_bn.running_var);
  for (auto& stage : stages) {
    for (auto& block : stage) block.collect_buffers(buffers);
  }
}

// --------------------------------------------------------- TemporalBranch

TemporalBranch::TemporalBranch(const ModelConfig& config) {
  const auto widths = config.temporal_widths();
  const int blocks = config.backbone == BackboneDepth::resnet18 ? 2 : 1;
  int in = config.stage_widths()[1];
  for (int s = 0; s < 3; ++s) {
    const int stride = s == 0 ? 1 : 2;
    for (int b = 0; b < blocks; ++b) {
      const nn::Dims3 st = b == 0 ? nn::Dims3{stride, stride, stride} : nn::Dims3{1, 1, 1};
      stages[s].emplace_back(in, widths[s], st, 3);
      in = widths[s];
    }
  }
}

void TemporalBranch::init(std::mt19937_64& rng) {
  for (auto& stage : stages) {
    for (auto& block : stage) block.init(rng);
  }
}

Tensor TemporalBranch::forward(const Tensor& volume, nn::Pass pass) {
  Tensor x = volume;
  for (auto& stage : stages) {
    for (auto& block : stage) x = block.forward(x, pass);
  }
  if (pass != nn::Pass::inference) pre_pool_shape_ = x.shape;
  return nn::global_avg_pool(x);
}

Tensor TemporalBranch::backward(const Tensor& d_pooled) {
  Tensor g = nn::global_avg_pool_backward(d_pooled, pre_pool_shape_);
  for (int s = 2; s >= 0; --s) {
    for (auto it = stages[s].rbegin(); it != stages[s].rend(); ++it) g = it->backward(g);
  }
  return g;
}

void TemporalBranch::collect(std::vector<nn::Param*>& params) {
  for (auto& stage : stages) {
    for (auto& block : stage) block.collect(params);
  }
}

void TemporalBranch::collect_buffers(std::vector<std::vector<float>*>& buffers) {
  for (auto& stage : stages) {
    for (auto& block : stage) block.collect_buffers(buffers);
  }
}

// ------------------------------------------------------------ helpers

Tensor stack_time(const Tensor& frame_maps, int batch) {
  if (batch < 1 || frame_maps.n() % batch != 0 || frame_maps.d() != 1) {
    throw ArgumentError("frame maps cannot be stacked into the requested batch");
  }
  const int frames = frame_maps.n() / batch;
  const int channels = frame_maps.c();
  const std::size_t plane = static_cast<std::size_t>(frame_maps.h()) * frame_maps.w();
  Tensor out(batch, channels, frames, frame_maps.h(), frame_maps.w());
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < frames; ++t) {
      const float* src = frame_maps.sample(b * frames + t);
      for (int c = 0; c < channels; ++c) {
        float* dst = out.sample(b) + (static_cast<std::size_t>(c) * frames + t) * plane;
        std::memcpy(dst, src + c * plane, plane * sizeof(float));
      }
    }
  }
  return out;
}

Tensor unstack_time(const Tensor& volume) {
  const int batch = volume.n();
  const int frames = volume.d();
  const int channels = volume.c();
  const std::size_t plane = static_cast<std::size_t>(volume.h()) * volume.w();
  Tensor out(batch * frames, channels, 1, volume.h(), volume.w());
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < frames; ++t) {
      float* dst = out.sample(b * frames + t);
      for (int c = 0; c < channels; ++c) {
        const float* src = volume.sample(b) + (static_cast<std::size_t>(c) * frames + t) * plane;
        std::memcpy(dst + c * plane, src, plane * sizeof(float));
      }
    }
  }
  return out;
}

namespace {

FeatureMatrix pooled_rows(const Tensor& pooled, int first, int count) {
  const int dim = pooled.c();
  return Eigen::Map<const FeatureMatrix>(pooled.data.data() + static_cast<std::size_t>(first) * dim,
                                         count, dim);
}

Tensor slice_samples(const Tensor& t, int first, int count) {
  Tensor out(count, t.c(), t.d(), t.h(), t.w());
  std::copy_n(t.sample(first), out.size(), out.data.begin());
  return out;
}

}  // namespace

// -------------------------------------------------------- VideoClassifier

VideoClassifier::VideoClassifier(const ModelConfig& config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  backbone_ = Backbone2d(config_);
  if (config_.use_temporal) temporal_ = TemporalBranch(config_);
  const int d = config_.spatial_feature_dim;
  const int m = config_.attention_hidden_dim;
  attention_V_ = nn::Param(static_cast<std::size_t>(m) * d);
  attention_w_ = nn::Param(m);
  head_ = nn::Linear(config_.fused_dim(), 1);

  std::mt19937_64 rng(seed);
  backbone_.init(rng);
  temporal_.init(rng);
  {
    std::uniform_real_distribution<double> v(-1.0 / std::sqrt(d), 1.0 / std::sqrt(d));
    for (auto& x : attention_V_.value) x = static_cast<float>(v(rng));
    std::uniform_real_distribution<double> w(-1.0 / std::sqrt(m), 1.0 / std::sqrt(m));
    for (auto& x : attention_w_.value) x = static_cast<float>(w(rng));
  }
  head_.init(rng);
}

FeatureMatrix VideoClassifier::attention_V_matrix() const {
  return Eigen::Map<const FeatureMatrix>(attention_V_.value.data(), config_.attention_hidden_dim,
                                         config_.spatial_feature_dim);
}

FeatureVector VideoClassifier::attention_w_vector() const {
  return Eigen::Map<const FeatureVector>(attention_w_.value.data(), config_.attention_hidden_dim);
}

VideoClassifier::FrameFeatures VideoClassifier::extract_frame_features(const Tensor& frames,
                                                                       nn::Pass pass) {
  if (frames.c() != 3 || frames.d() != 1 || frames.h() != config_.input_size ||
      frames.w() != config_.input_size) {
    throw ConfigError("frames must be 3 x " + std::to_string(config_.input_size) + " x " +
                      std::to_string(config_.input_size));
  }
  auto out = backbone_.forward(frames, pass);
  const Tensor pooled = nn::global_avg_pool(out.final_maps);
  FrameFeatures f;
  f.features = pooled_rows(pooled, 0, pooled.n());
  f.stage2 = std::move(out.stage2);
  f.final_maps = std::move(out.final_maps);
  return f;
}

FeatureVector VideoClassifier::temporal_branch(const Tensor& stage2_maps, nn::Pass pass) {
  if (!config_.use_temporal) throw ConfigError("the temporal branch is disabled in this model");
  if (stage2_maps.n() < 2) {
    throw InsufficientFramesError("the temporal branch needs at least 2 frames, got " +
                                  std::to_string(stage2_maps.n()));
  }
  const Tensor pooled = temporal_.forward(stack_time(stage2_maps, 1), pass);
  return Eigen::Map<const FeatureVector>(pooled.data.data(), pooled.c());
}

AttentionOutput<float> VideoClassifier::aggregate(const FeatureMatrix& frame_features) const {
  if (config_.use_attention) {
    return attention_aggregate<float>(frame_features, attention_V_matrix(), attention_w_vector());
  }
  return mean_aggregate<float>(frame_features);
}

VideoClassifier::Classification VideoClassifier::fuse_and_classify(const FeatureVector& spatial,
                                                                   const FeatureVector& temporal) {
  const int d = config_.spatial_feature_dim;
  if (spatial.size() != d) throw ConfigError("spatial feature has the wrong dimension");
  Classification out;
  if (!config_.use_temporal) {
    out.fused = spatial;
  } else {
    if (temporal.size() != config_.temporal_feature_dim) {
      throw ConfigError("temporal feature has dimension " + std::to_string(temporal.size()) +
                        ", expected " + std::to_string(config_.temporal_feature_dim));
    }
    if (config_.fusion == Fusion::concat) {
      out.fused.resize(spatial.size() + temporal.size());
      out.fused << spatial, temporal;
    } else {
      if (spatial.size() != temporal.size()) throw ConfigError("fusion=sum needs equal dimensions");
      out.fused = spatial + temporal;
    }
  }
  Tensor in(1, static_cast<int>(out.fused.size()), 1, 1, 1);
  std::copy_n(out.fused.data(), out.fused.size(), in.data.begin());
  const Tensor logit = head_.forward(in, nn::Pass::inference);
  out.logit = logit.data[0];
  out.probability = static_cast<float>(logistic(out.logit));
  return out;
}

VideoClassifier::BatchResult VideoClassifier::forward(const Tensor& frames, int batch,
                                                      nn::Pass pass, bool keep_bundles) {
  if (batch < 1 || frames.n() % batch != 0) {
    throw ArgumentError("frame count is not a multiple of the batch size");
  }
  const int n = frames.n() / batch;
  if (config_.use_temporal && n < 2) {
    throw InsufficientFramesError("the temporal branch needs at least 2 frames per collection");
  }
  auto features = extract_frame_features(frames, pass);
  const int d = config_.spatial_feature_dim;
  const bool caching = pass != nn::Pass::inference;
  if (caching) {
    batch_ = batch;
    final_shape_ = features.final_maps.shape;
    stage2_shape_ = features.stage2.shape;
    cached_features_.clear();
    cached_attention_.clear();
    final_maps_ = features.final_maps;
  }

  const FeatureMatrix V = attention_V_matrix();
  const FeatureVector w = attention_w_vector();
  std::vector<AttentionOutput<float>> attention;
  attention.reserve(batch);
  for (int b = 0; b < batch; ++b) {
    FeatureMatrix h = features.features.middleRows(static_cast<Eigen::Index>(b) * n, n);
    attention.push_back(config_.use_attention ? attention_aggregate<float>(h, V, w)
                                              : mean_aggregate<float>(h));
    if (caching) cached_features_.push_back(std::move(h));
  }

  Tensor temporal;
  if (config_.use_temporal) temporal = temporal_.forward(stack_time(features.stage2, batch), pass);

  const int fused_dim = config_.fused_dim();
  Tensor fused(batch, fused_dim, 1, 1, 1);
  for (int b = 0; b < batch; ++b) {
    float* row = fused.sample(b);
    const FeatureVector& s = attention[b].pooled;
    if (!config_.use_temporal) {
      std::copy_n(s.data(), d, row);
    } else if (config_.fusion == Fusion::concat) {
      std::copy_n(s.data(), d, row);
      std::copy_n(temporal.sample(b), config_.temporal_feature_dim, row + d);
    } else {
      for (int i = 0; i < d; ++i) row[i] = s[i] + temporal.sample(b)[i];
    }
  }
  const Tensor logits = head_.forward(fused, pass);

  BatchResult result;
  result.logits.assign(logits.data.begin(), logits.data.end());
  if (keep_bundles) {
    for (int b = 0; b < batch; ++b) {
      FeatureBundle bundle;
      bundle.frame_features = features.features.middleRows(static_cast<Eigen::Index>(b) * n, n);
      bundle.stage2_maps = slice_samples(features.stage2, b * n, n);
      bundle.attention_weights = attention[b].weights;
      bundle.spatial_feature = attention[b].pooled;
      if (config_.use_temporal) {
        bundle.temporal_feature =
            Eigen::Map<const FeatureVector>(temporal.sample(b), config_.temporal_feature_dim);
      }
      bundle.fused = Eigen::Map<const FeatureVector>(fused.sample(b), fused_dim);
      bundle.logit = result.logits[b];
      bundle.probability = static_cast<float>(logistic(bundle.logit));
      result.bundles.push_back(std::move(bundle));
    }
  }
  if (caching) cached_attention_ = std::move(attention);
  return result;
}

void VideoClassifier::backward(std::span<const float> d_logits) {
  if (static_cast<int>(d_logits.size()) != batch_ || cached_attention_.empty()) {
    throw StateError("backward called without a matching cached forward pass");
  }
  const int batch = batch_;
  const int d = config_.spatial_feature_dim;
  const int dt = config_.temporal_feature_dim;
  const int n = final_shape_[0] / batch;

  Tensor dl(batch, 1, 1, 1, 1);
  std::copy(d_logits.begin(), d_logits.end(), dl.data.begin());
  const Tensor d_fused = head_.backward(dl);

  const FeatureMatrix V = attention_V_matrix();
  const FeatureVector w = attention_w_vector();
  FeatureMatrix dV = FeatureMatrix::Zero(V.rows(), V.cols());
  FeatureVector dw = FeatureVector::Zero(w.size());
  Tensor d_pooled(batch * n, d, 1, 1, 1);
  Tensor d_temporal;
  if (config_.use_temporal) d_temporal = Tensor(batch, dt, 1, 1, 1);

  for (int b = 0; b < batch; ++b) {
    const float* row = d_fused.sample(b);
    const FeatureVector d_spatial = Eigen::Map<const FeatureVector>(row, d);
    if (config_.use_temporal) {
      const float* src = config_.fusion == Fusion::concat ? row + d : row;
      std::copy_n(src, dt, d_temporal.sample(b));
    }
    FeatureMatrix d_features;
    if (config_.use_attention) {
      auto g = attention_backward<float>(cached_features_[b], V, w, cached_attention_[b], d_spatial);
      dV += g.V;
      dw += g.w;
      d_features = std::move(g.features);
    } else {
      d_features = mean_backward<float>(n, d_spatial);
    }
    Eigen::Map<FeatureMatrix>(d_pooled.sample(b * n), n, d) = d_features;
  }
  for (std::size_t i = 0; i < attention_V_.size(); ++i) attention_V_.grad[i] += dV.data()[i];
  for (std::size_t i = 0; i < attention_w_.size(); ++i) attention_w_.grad[i] += dw[i];

  final_maps_grad_ = nn::global_avg_pool_backward(d_pooled, final_shape_);
  if (config_.use_temporal) {
    const Tensor d_stage2 = unstack_time(temporal_.backward(d_temporal));
    backbone_.backward(final_maps_grad_, &d_stage2);
  } else {
    backbone_.backward(final_maps_grad_, nullptr);
  }
}

std::vector<nn::Param*> VideoClassifier::parameters() {
  std::vector<nn::Param*> params;
  backbone_.collect(params);
  temporal_.collect(params);
  params.push_back(&attention_V_);
  params.push_back(&attention_w_);
  head_.collect(params);
  return params;
}

std::vector<std::vector<float>*> VideoClassifier::buffers() {
  std::vector<std::vector<float>*> out;
  backbone_.collect_buffers(out);
  temporal_.collect_buffers(out);
  return out;
}

void VideoClassifier::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

std::vector<float> VideoClassifier::state() const {
  auto& self = const_cast<VideoClassifier&>(*this);
  std::vector<float> out;
  for (auto* p : self.parameters()) out.insert(out.end(), p->value.begin(), p->value.end());
  for (auto* b : self.buffers()) out.insert(out.end(), b->begin(), b->end());
  return out;
}

void VideoClassifier::load_state(std::span<const float> state) {
  std::size_t expected = 0;
  for (auto* p : parameters()) expected += p->size();
  for (auto* b : buffers()) expected += b->size();
  if (state.size() != expected) {
    throw StateError("parameter blob has " + std::to_string(state.size()) + " values, model needs " +
                     std::to_string(expected));
  }
  std::size_t offset = 0;
  for (auto* p : parameters()) {
    std::copy_n(state.begin() + offset, p->size(), p->value.begin());
    offset += p->size();
  }
  for (auto* b : buffers()) {
    std::copy_n(state.begin() + offset, b->size(), b->begin());
    offset += b->size();
  }
}

std::vector<float> VideoClassifier::backbone_state() const {
  auto& self = const_cast<VideoClassifier&>(*this);
  std::vector<nn::Param*> params;
  std::vector<std::vector<float>*> bufs;
  self.backbone_.collect(params);
  self.backbone_.collect_buffers(bufs);
  std::vector<float> out;
  for (auto* p : params) out.insert(out.end(), p->value.begin(), p->value.end());
  for (auto* b : bufs) out.insert(out.end(), b->begin(), b->end());
  return out;
}

void VideoClassifier::load_backbone_state(std::span<const float> state) {
  std::vector<nn::Param*> params;
  std::vector<std::vector<float>*> bufs;
  backbone_.collect(params);
  backbone_.collect_buffers(bufs);
  std::size_t expected = 0;
  for (auto* p : params) expected += p->size();
  for (auto* b : bufs) expected += b->size();
  if (state.size() != expected) throw StateError("backbone weights do not match this backbone");
  std::size_t offset = 0;
  for (auto* p : params) {
    std::copy_n(state.begin() + offset, p->size(), p->value.begin());
    offset += p->size();
  }
  for (auto* b : bufs) {
    std::copy_n(state.begin() + offset, b->size(), b->begin());
    offset += b->size();
  }
}

// ------------------------------------------------------------ inference

ForwardOutput forward(VideoClassifier& model, const FrameIndexCollection& collection,
                      const FrameStack& video) {
  const auto& cfg = model.config();
  const auto indices = collection.resolve(video.frames);
  const Tensor input = frames_to_tensor(video, indices, cfg.input_size, cfg.normalization);
  auto result = model.forward(input, 1, nn::Pass::inference, true);
  ForwardOutput out;
  out.bundle = std::move(result.bundles.front());
  out.probability = out.bundle.probability;
  return out;
}

Prediction predict_video(VideoClassifier& model, const FrameStack& video) {
  const auto& cfg = model.config();
  const BlockPartition partition = partition_blocks(video.frames, cfg.num_frames);
  std::vector<FrameIndexCollection> collections;
  if (cfg.use_mad) {
    collections = block_inference_collections(partition);
  } else {
    collections.push_back(block_middle_collection(partition));
  }
  // Bounded chunks keep activation memory flat for long videos.
  const int per_chunk = std::max(1, 64 / cfg.num_frames);
  Prediction p;
  for (std::size_t first = 0; first < collections.size(); first += per_chunk) {
    const std::size_t last = std::min(collections.size(), first + per_chunk);
    std::vector<int> indices;
    for (std::size_t c = first; c < last; ++c) {
      const auto resolved = collections[c].resolve(video.frames);
      indices.insert(indices.end(), resolved.begin(), resolved.end());
    }
    const Tensor input = frames_to_tensor(video, indices, cfg.input_size, cfg.normalization);
    const auto result = model.forward(input, static_cast<int>(last - first), nn::Pass::inference);
    for (float logit : result.logits) {
      const double score = logistic(logit);
      p.collection_scores.push_back(score);
      p.collection_votes.push_back(vote_for(score));
    }
  }
  p.final_label = maximal_agreement_decision(p.collection_votes);
  double sum = 0.0;
  for (double s : p.collection_scores) sum += s;
  p.final_score = sum / static_cast<double>(p.collection_scores.size());
  return p;
}

}  // namespace echomil
