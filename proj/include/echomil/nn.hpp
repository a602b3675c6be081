#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "echomil/tensor.hpp"

namespace echomil::nn {

/// How a forward call behaves.
///  - inference: normalization uses running statistics, nothing is cached.
///  - training: batch statistics (running stats updated), activations cached.
///  - gradient: running statistics, activations cached so backward can run
///    against a frozen network (used for class-activation maps).
enum class Pass { inference, training, gradient };

struct Param {
  std::vector<float> value;
  std::vector<float> grad;

  explicit Param(std::size_t n = 0) : value(n, 0.0f), grad(n, 0.0f) {}
  std::size_t size() const { return value.size(); }
  void zero_grad();
};

struct Dims3 {
  int d = 1;
  int h = 1;
  int w = 1;
};

/// Volumetric convolution without bias. Planar convolution is the d = 1 case.
class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(int in_channels, int out_channels, Dims3 kernel, Dims3 stride, Dims3 padding);

  /// He-normal initialization scaled by fan-out.
  void init(std::mt19937_64& rng);

  Tensor forward(const Tensor& x, Pass pass);
  Tensor backward(const Tensor& grad_out);
  void collect(std::vector<Param*>& params);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  Dims3 kernel() const { return kernel_; }
  Dims3 stride() const { return stride_; }
  Dims3 padding() const { return pad_; }
  Dims3 output_dims(const Tensor& x) const;

  Param weight;  // out x in x kd x kh x kw

 private:
  int in_ = 0;
  int out_ = 0;
  Dims3 kernel_, stride_, pad_{0, 0, 0};
  Tensor input_;
};

/// Per-channel batch normalization over N, D, H, W.
class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(int channels);

  Tensor forward(const Tensor& x, Pass pass);
  Tensor backward(const Tensor& grad_out);
  void collect(std::vector<Param*>& params);

  int channels() const { return static_cast<int>(gamma.size()); }

  Param gamma;
  Param beta;
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float eps = 1e-5f;
  float momentum = 0.1f;

 private:
  Tensor normalized_;
  std::vector<float> inv_std_;
  bool batch_stats_ = false;
};

class ReLU {
 public:
  Tensor forward(Tensor x, Pass pass);
  Tensor backward(Tensor grad_out) const;

 private:
  std::vector<std::uint8_t> mask_;
};

class MaxPool3d {
 public:
  MaxPool3d() = default;
  MaxPool3d(Dims3 kernel, Dims3 stride, Dims3 padding)
      : kernel_(kernel), stride_(stride), pad_(padding) {}

  Tensor forward(const Tensor& x, Pass pass);
  Tensor backward(const Tensor& grad_out) const;

  Dims3 kernel() const { return kernel_; }
  Dims3 stride() const { return stride_; }
  Dims3 padding() const { return pad_; }

 private:
  Dims3 kernel_, stride_, pad_{0, 0, 0};
  std::array<int, 5> input_shape_{};
  std::vector<int> argmax_;
};

/// Two 3x3 convolutions with an identity or projected shortcut.
/// `kernel_depth` is 1 for frame-wise blocks and 3 for volumetric blocks.
class BasicBlock {
 public:
  BasicBlock() = default;
  BasicBlock(int in_channels, int out_channels, Dims3 stride, int kernel_depth);

  void init(std::mt19937_64& rng);
  Tensor forward(const Tensor& x, Pass pass);
  Tensor backward(const Tensor& grad_out);
  void collect(std::vector<Param*>& params);
  void collect_buffers(std::vector<std::vector<float>*>& buffers);

  bool has_projection() const { return projection.has_value(); }

  Conv3d conv1;
  BatchNorm bn1;
  Conv3d conv2;
  BatchNorm bn2;
  struct Projection {
    Conv3d conv;
    BatchNorm bn;
  };
  std::optional<Projection> projection;

 private:
  ReLU relu1_;
  ReLU relu_out_;
};

/// Fully connected layer on a (batch, features, 1, 1, 1) tensor.
class Linear {
 public:
  Linear() = default;
  Linear(int in_features, int out_features);

  void init(std::mt19937_64& rng);
  Tensor forward(const Tensor& x, Pass pass);
  Tensor backward(const Tensor& grad_out);
  void collect(std::vector<Param*>& params);

  int in_features() const { return in_; }
  int out_features() const { return out_; }

  Param weight;  // out x in
  Param bias;

 private:
  int in_ = 0;
  int out_ = 0;
  Tensor input_;
};

/// Mean over D, H, W. Output shape (N, C, 1, 1, 1).
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& grad_out, const std::array<int, 5>& input_shape);

}  // namespace echomil::nn
