#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "echomil/attention.hpp"
#include "echomil/nn.hpp"
#include "echomil/sampling.hpp"
#include "echomil/tensor.hpp"
#include "echomil/video.hpp"

namespace echomil {

enum class BackboneDepth { resnet18, toy };
enum class Fusion { concat, sum };

std::string to_string(BackboneDepth depth);
std::string to_string(Fusion fusion);

struct ModelConfig {
  int num_frames = 16;
  int input_size = 224;
  int spatial_feature_dim = 512;
  int attention_hidden_dim = 1024;
  int temporal_feature_dim = 512;
  BackboneDepth backbone = BackboneDepth::resnet18;
  bool pretrained_backbone = false;
  std::string pretrained_path;  // checkpoint whose backbone weights seed this model
  Fusion fusion = Fusion::concat;
  bool use_temporal = true;    // 3D branch on/off
  bool use_attention = true;   // attention pooling vs. mean pooling
  bool use_mad = true;         // all K collections + majority vs. middle collection only
  Normalization normalization;

  /// Reduced variant used for CPU-scale experiments.
  static ModelConfig toy();

  void validate() const;
  std::array<int, 4> stage_widths() const;
  std::array<int, 3> temporal_widths() const;
  int fused_dim() const;
};

using FeatureMatrix = RowMatrix<float>;
using FeatureVector = Vector<float>;

/// Intermediate values of one forward pass over one frame collection.
struct FeatureBundle {
  FeatureMatrix frame_features;     // N x D
  Tensor stage2_maps;               // N x C x 1 x h x w
  FeatureVector attention_weights;  // N
  FeatureVector spatial_feature;    // D
  FeatureVector temporal_feature;   // empty when the 3D branch is off
  FeatureVector fused;
  float logit = 0.0f;
  float probability = 0.0f;
};

struct Prediction {
  std::vector<Label> collection_votes;
  std::vector<double> collection_scores;
  Label final_label = Label::negative;
  double final_score = 0.0;
};

double logistic(double x);

/// 2D residual trunk applied frame by frame.
class Backbone2d {
 public:
  Backbone2d() = default;
  explicit Backbone2d(const ModelConfig& config);

  void init(std::mt19937_64& rng);

  struct Output {
    Tensor stage2;
    Tensor final_maps;
  };
  Output forward(const Tensor& frames, nn::Pass pass);
  /// `d_stage2` may be null when nothing downstream consumed the stage-2 maps.
  Tensor backward(const Tensor& d_final, const Tensor* d_stage2);

  void collect(std::vector<nn::Param*>& params);
  void collect_buffers(std::vector<std::vector<float>*>& buffers);

  nn::Conv3d stem_conv;
  nn::BatchNorm stem_bn;
  bool stem_pool_enabled = false;
  nn::MaxPool3d stem_pool;
  std::array<std::vector<nn::BasicBlock>, 4> stages;

 private:
  nn::ReLU stem_relu_;
};

/// Volumetric residual stages over the time-stacked stage-2 maps, then
/// global average pooling.
class TemporalBranch {
 public:
  TemporalBranch() = default;
  explicit TemporalBranch(const ModelConfig& config);

  void init(std::mt19937_64& rng);
  /// volume: (B, C, N, h, w). Returns (B, temporal_dim, 1, 1, 1).
  Tensor forward(const Tensor& volume, nn::Pass pass);
  Tensor backward(const Tensor& d_pooled);

  void collect(std::vector<nn::Param*>& params);
  void collect_buffers(std::vector<std::vector<float>*>& buffers);

  std::array<std::vector<nn::BasicBlock>, 3> stages;

 private:
  std::array<int, 5> pre_pool_shape_{};
};

/// The dual-branch classifier. Copyable; copies share nothing.
class VideoClassifier {
 public:
  VideoClassifier(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  struct FrameFeatures {
    FeatureMatrix features;  // count x D
    Tensor stage2;
    Tensor final_maps;
  };
  /// Frame-wise backbone features for a (count, 3, 1, S, S) input.
  FrameFeatures extract_frame_features(const Tensor& frames, nn::Pass pass = nn::Pass::inference);

  /// Temporal feature for one collection's stage-2 maps (N x C x 1 x h x w).
  FeatureVector temporal_branch(const Tensor& stage2_maps, nn::Pass pass = nn::Pass::inference);

  /// Attention (or mean, when disabled) pooling with this model's parameters.
  AttentionOutput<float> aggregate(const FeatureMatrix& frame_features) const;

  struct Classification {
    FeatureVector fused;
    float logit = 0.0f;
    float probability = 0.0f;
  };
  /// Fuses the two branch features and applies the linear head. `temporal`
  /// is ignored when the 3D branch is off.
  Classification fuse_and_classify(const FeatureVector& spatial, const FeatureVector& temporal);

  struct BatchResult {
    std::vector<float> logits;
    std::vector<FeatureBundle> bundles;  // filled when requested
  };
  /// frames: (batch * N, 3, 1, S, S), N frames per collection in order.
  BatchResult forward(const Tensor& frames, int batch, nn::Pass pass, bool keep_bundles = false);

  /// Backpropagates d loss / d logit for the last forward (training or
  /// gradient pass) and accumulates parameter gradients.
  void backward(std::span<const float> d_logits);

  /// Backbone output maps and their gradient from the last forward/backward.
  const Tensor& final_maps() const { return final_maps_; }
  const Tensor& final_maps_grad() const { return final_maps_grad_; }

  std::vector<nn::Param*> parameters();
  void zero_grad();

  /// Parameters followed by normalization running statistics.
  std::vector<float> state() const;
  void load_state(std::span<const float> state);
  std::vector<float> backbone_state() const;
  void load_backbone_state(std::span<const float> state);

  Backbone2d& backbone() { return backbone_; }
  TemporalBranch& temporal() { return temporal_; }
  nn::Param& attention_V() { return attention_V_; }
  nn::Param& attention_w() { return attention_w_; }
  nn::Linear& head() { return head_; }

 private:
  FeatureMatrix attention_V_matrix() const;
  FeatureVector attention_w_vector() const;
  std::vector<std::vector<float>*> buffers();

  ModelConfig config_;
  Backbone2d backbone_;
  TemporalBranch temporal_;
  nn::Param attention_V_;  // M x D
  nn::Param attention_w_;  // M
  nn::Linear head_;

  // Cached by forward for backward.
  int batch_ = 0;
  std::array<int, 5> final_shape_{};
  std::array<int, 5> stage2_shape_{};
  std::vector<FeatureMatrix> cached_features_;
  std::vector<AttentionOutput<float>> cached_attention_;
  Tensor final_maps_;
  Tensor final_maps_grad_;
};

/// (batch * N, C, 1, h, w) -> (batch, C, N, h, w) and back.
Tensor stack_time(const Tensor& frame_maps, int batch);
Tensor unstack_time(const Tensor& volume);

struct ForwardOutput {
  float probability = 0.0f;
  FeatureBundle bundle;
};

/// Runs one frame collection of a video through the model (inference pass).
ForwardOutput forward(VideoClassifier& model, const FrameIndexCollection& collection,
                      const FrameStack& video);

/// Scores all inference collections of a video and applies the majority
/// decision (or only the middle collection when MAD is disabled).
Prediction predict_video(VideoClassifier& model, const FrameStack& video);

/// Label for a probability: +1 iff p >= 0.5.
inline Label vote_for(double probability) {
  return probability >= 0.5 ? Label::positive : Label::negative;
}

}  // namespace echomil
