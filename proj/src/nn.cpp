#include "echomil/nn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "echomil/errors.hpp"

namespace echomil::nn {

namespace {

using MatR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct VolumeGeometry {
  int channels, depth, height, width;
  Dims3 kernel, stride, pad, out;

  std::size_t rows() const {
    return static_cast<std::size_t>(channels) * kernel.d * kernel.h * kernel.w;
  }
  std::size_t cols() const { return static_cast<std::size_t>(out.d) * out.h * out.w; }
};

void vol2col(const float* src, const VolumeGeometry& g, float* col) {
  const std::size_t cols = g.cols();
  std::size_t row = 0;
  for (int c = 0; c < g.channels; ++c) {
    const float* plane = src + static_cast<std::size_t>(c) * g.depth * g.height * g.width;
    for (int i = 0; i < g.kernel.d; ++i) {
      for (int j = 0; j < g.kernel.h; ++j) {
        for (int l = 0; l < g.kernel.w; ++l, ++row) {
          float* dst = col + row * cols;
          for (int od = 0; od < g.out.d; ++od) {
            const int id = od * g.stride.d - g.pad.d + i;
            if (id < 0 || id >= g.depth) {
              std::fill_n(dst, static_cast<std::size_t>(g.out.h) * g.out.w, 0.0f);
              dst += static_cast<std::size_t>(g.out.h) * g.out.w;
              continue;
            }
            for (int oh = 0; oh < g.out.h; ++oh) {
              const int ih = oh * g.stride.h - g.pad.h + j;
              if (ih < 0 || ih >= g.height) {
                std::fill_n(dst, g.out.w, 0.0f);
                dst += g.out.w;
                continue;
              }
              const float* line = plane + (static_cast<std::size_t>(id) * g.height + ih) * g.width;
              for (int ow = 0; ow < g.out.w; ++ow) {
                const int iw = ow * g.stride.w - g.pad.w + l;
                *dst++ = (iw >= 0 && iw < g.width) ? line[iw] : 0.0f;
              }
            }
          }
        }
      }
    }
  }
}

void col2vol(const float* col, const VolumeGeometry& g, float* dst_volume) {
  const std::size_t cols = g.cols();
  std::size_t row = 0;
  for (int c = 0; c < g.channels; ++c) {
    float* plane = dst_volume + static_cast<std::size_t>(c) * g.depth * g.height * g.width;
    for (int i = 0; i < g.kernel.d; ++i) {
      for (int j = 0; j < g.kernel.h; ++j) {
        for (int l = 0; l < g.kernel.w; ++l, ++row) {
          const float* src = col + row * cols;
          for (int od = 0; od < g.out.d; ++od) {
            const int id = od * g.stride.d - g.pad.d + i;
            if (id < 0 || id >= g.depth) {
              src += static_cast<std::size_t>(g.out.h) * g.out.w;
              continue;
            }
            for (int oh = 0; oh < g.out.h; ++oh) {
              const int ih = oh * g.stride.h - g.pad.h + j;
              if (ih < 0 || ih >= g.height) {
                src += g.out.w;
                continue;
              }
              float* line = plane + (static_cast<std::size_t>(id) * g.height + ih) * g.width;
              for (int ow = 0; ow < g.out.w; ++ow, ++src) {
                const int iw = ow * g.stride.w - g.pad.w + l;
                if (iw >= 0 && iw < g.width) line[iw] += *src;
              }
            }
          }
        }
      }
    }
  }
}

bool is_pointwise(Dims3 k, Dims3 s, Dims3 p) {
  return k.d == 1 && k.h == 1 && k.w == 1 && s.d == 1 && s.h == 1 && s.w == 1 &&
         p.d == 0 && p.h == 0 && p.w == 0;
}

}  // namespace

void Param::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }

// ---------------------------------------------------------------- Conv3d

Conv3d::Conv3d(int in_channels, int out_channels, Dims3 kernel, Dims3 stride, Dims3 padding)
    : weight(static_cast<std::size_t>(out_channels) * in_channels * kernel.d * kernel.h * kernel.w),
      in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      pad_(padding) {}

void Conv3d::init(std::mt19937_64& rng) {
  const double fan_out = static_cast<double>(out_) * kernel_.d * kernel_.h * kernel_.w;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_out));
  for (auto& v : weight.value) v = static_cast<float>(dist(rng));
}

Dims3 Conv3d::output_dims(const Tensor& x) const {
  return {(x.d() + 2 * pad_.d - kernel_.d) / stride_.d + 1,
          (x.h() + 2 * pad_.h - kernel_.h) / stride_.h + 1,
          (x.w() + 2 * pad_.w - kernel_.w) / stride_.w + 1};
}

Tensor Conv3d::forward(const Tensor& x, Pass pass) {
  if (x.c() != in_) {
    throw ConfigError("conv input has " + std::to_string(x.c()) + " channels, expected " +
                      std::to_string(in_));
  }
  const Dims3 o = output_dims(x);
  if (o.d < 1 || o.h < 1 || o.w < 1) throw ConfigError("conv input smaller than kernel");
  Tensor y(x.n(), out_, o.d, o.h, o.w);
  const VolumeGeometry g{in_, x.d(), x.h(), x.w(), kernel_, stride_, pad_, o};
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto cols = static_cast<Eigen::Index>(g.cols());
  Eigen::Map<const MatR> w(weight.value.data(), out_, rows);
  const bool pointwise = is_pointwise(kernel_, stride_, pad_);
  std::vector<float> col(pointwise ? 0 : g.rows() * g.cols());
  for (int n = 0; n < x.n(); ++n) {
    const float* src = x.sample(n);
    if (!pointwise) {
      vol2col(src, g, col.data());
      src = col.data();
    }
    Eigen::Map<MatR> out(y.sample(n), out_, cols);
    out.noalias() = w * Eigen::Map<const MatR>(src, rows, cols);
  }
  if (pass != Pass::inference) input_ = x;
  return y;
}

Tensor Conv3d::backward(const Tensor& grad_out) {
  const Tensor& x = input_;
  const Dims3 o = output_dims(x);
  const VolumeGeometry g{in_, x.d(), x.h(), x.w(), kernel_, stride_, pad_, o};
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto cols = static_cast<Eigen::Index>(g.cols());
  Eigen::Map<const MatR> w(weight.value.data(), out_, rows);
  Eigen::Map<MatR> dw(weight.grad.data(), out_, rows);
  const bool pointwise = is_pointwise(kernel_, stride_, pad_);
  Tensor dx(x.n(), x.c(), x.d(), x.h(), x.w());
  std::vector<float> col(pointwise ? 0 : g.rows() * g.cols());
  MatR dcol(rows, cols);
  for (int n = 0; n < x.n(); ++n) {
    const float* src = x.sample(n);
    if (!pointwise) {
      vol2col(src, g, col.data());
      src = col.data();
    }
    Eigen::Map<const MatR> dy(grad_out.sample(n), out_, cols);
    dw.noalias() += dy * Eigen::Map<const MatR>(src, rows, cols).transpose();
    if (pointwise) {
      Eigen::Map<MatR>(dx.sample(n), rows, cols).noalias() = w.transpose() * dy;
    } else {
      dcol.noalias() = w.transpose() * dy;
      col2vol(dcol.data(), g, dx.sample(n));
    }
  }
  return dx;
}

void Conv3d::collect(std::vector<Param*>& params) { params.push_back(&weight); }

// ------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(int channels)
    : gamma(channels),
      beta(channels),
      running_mean(channels, 0.0f),
      running_var(channels, 1.0f) {
  std::fill(gamma.value.begin(), gamma.value.end(), 1.0f);
}

Tensor BatchNorm::forward(const Tensor& x, Pass pass) {
  const int channels = x.c();
  if (channels != this->channels()) throw ConfigError("batch norm channel mismatch");
  const std::size_t spatial = x.spatial_size();
  const std::size_t count = spatial * x.n();
  std::vector<float> mean(channels), var(channels);
  const bool batch_stats = pass == Pass::training;
  if (batch_stats) {
    for (int c = 0; c < channels; ++c) {
      double sum = 0.0;
      double sq = 0.0;
      for (int n = 0; n < x.n(); ++n) {
        const float* p = x.sample(n) + c * spatial;
        for (std::size_t i = 0; i < spatial; ++i) sum += p[i];
      }
      const double mu = sum / static_cast<double>(count);
      for (int n = 0; n < x.n(); ++n) {
        const float* p = x.sample(n) + c * spatial;
        for (std::size_t i = 0; i < spatial; ++i) sq += (p[i] - mu) * (p[i] - mu);
      }
      const double biased = sq / static_cast<double>(count);
      mean[c] = static_cast<float>(mu);
      var[c] = static_cast<float>(biased);
      const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : biased;
      running_mean[c] = (1.0f - momentum) * running_mean[c] + momentum * static_cast<float>(mu);
      running_var[c] = (1.0f - momentum) * running_var[c] + momentum * static_cast<float>(unbiased);
    }
  } else {
    mean = running_mean;
    var = running_var;
  }
  std::vector<float> inv_std(channels);
  for (int c = 0; c < channels; ++c) inv_std[c] = 1.0f / std::sqrt(var[c] + eps);

  Tensor y(x.n(), x.c(), x.d(), x.h(), x.w());
  const bool cache = pass != Pass::inference;
  if (cache) {
    normalized_ = Tensor(x.n(), x.c(), x.d(), x.h(), x.w());
    inv_std_ = inv_std;
    batch_stats_ = batch_stats;
  }
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < channels; ++c) {
      const float* p = x.sample(n) + c * spatial;
      float* q = y.sample(n) + c * spatial;
      float* h = cache ? normalized_.sample(n) + c * spatial : nullptr;
      const float m = mean[c], s = inv_std[c], gm = gamma.value[c], bt = beta.value[c];
      for (std::size_t i = 0; i < spatial; ++i) {
        const float xhat = (p[i] - m) * s;
        if (h) h[i] = xhat;
        q[i] = gm * xhat + bt;
      }
    }
  }
  return y;
}

Tensor BatchNorm::backward(const Tensor& grad_out) {
  const Tensor& xhat = normalized_;
  const int channels = xhat.c();
  const std::size_t spatial = xhat.spatial_size();
  const double count = static_cast<double>(spatial * xhat.n());
  Tensor dx(xhat.n(), xhat.c(), xhat.d(), xhat.h(), xhat.w());
  for (int c = 0; c < channels; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (int n = 0; n < xhat.n(); ++n) {
      const float* dy = grad_out.sample(n) + c * spatial;
      const float* h = xhat.sample(n) + c * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += static_cast<double>(dy[i]) * h[i];
      }
    }
    gamma.grad[c] += static_cast<float>(sum_dy_xhat);
    beta.grad[c] += static_cast<float>(sum_dy);
    const double scale = static_cast<double>(gamma.value[c]) * inv_std_[c];
    for (int n = 0; n < xhat.n(); ++n) {
      const float* dy = grad_out.sample(n) + c * spatial;
      const float* h = xhat.sample(n) + c * spatial;
      float* out = dx.sample(n) + c * spatial;
      if (batch_stats_) {
        const double mean_dy = sum_dy / count;
        const double mean_dy_xhat = sum_dy_xhat / count;
        for (std::size_t i = 0; i < spatial; ++i) {
          out[i] = static_cast<float>(scale * (dy[i] - mean_dy - h[i] * mean_dy_xhat));
        }
      } else {
        for (std::size_t i = 0; i < spatial; ++i) out[i] = static_cast<float>(scale * dy[i]);
      }
    }
  }
  return dx;
}

void BatchNorm::collect(std::vector<Param*>& params) {
  params.push_back(&gamma);
  params.push_back(&beta);
}

// ------------------------------------------------------------------ ReLU

Tensor ReLU::forward(Tensor x, Pass pass) {
  const bool cache = pass != Pass::inference;
  if (cache) mask_.assign(x.size(), 0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x.data[i] > 0.0f) {
      if (cache) mask_[i] = 1;
    } else {
      x.data[i] = 0.0f;
    }
  }
  return x;
}

Tensor ReLU::backward(Tensor grad_out) const {
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    if (!mask_[i]) grad_out.data[i] = 0.0f;
  }
  return grad_out;
}

// ------------------------------------------------------------- MaxPool3d

Tensor MaxPool3d::forward(const Tensor& x, Pass pass) {
  const int od = (x.d() + 2 * pad_.d - kernel_.d) / stride_.d + 1;
  const int oh = (x.h() + 2 * pad_.h - kernel_.h) / stride_.h + 1;
  const int ow = (x.w() + 2 * pad_.w - kernel_.w) / stride_.w + 1;
  if (od < 1 || oh < 1 || ow < 1) throw ConfigError("pool input smaller than window");
  Tensor y(x.n(), x.c(), od, oh, ow);
  const bool cache = pass != Pass::inference;
  if (cache) {
    argmax_.assign(y.size(), -1);
    input_shape_ = x.shape;
  }
  std::size_t out_index = 0;
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * x.c() + c) * x.spatial_size();
      for (int a = 0; a < od; ++a) {
        for (int b = 0; b < oh; ++b) {
          for (int e = 0; e < ow; ++e, ++out_index) {
            float best = -std::numeric_limits<float>::infinity();
            int best_idx = -1;
            for (int i = 0; i < kernel_.d; ++i) {
              const int id = a * stride_.d - pad_.d + i;
              if (id < 0 || id >= x.d()) continue;
              for (int j = 0; j < kernel_.h; ++j) {
                const int ih = b * stride_.h - pad_.h + j;
                if (ih < 0 || ih >= x.h()) continue;
                for (int l = 0; l < kernel_.w; ++l) {
                  const int iw = e * stride_.w - pad_.w + l;
                  if (iw < 0 || iw >= x.w()) continue;
                  const int idx = (id * x.h() + ih) * x.w() + iw;
                  const float v = x.data[base + idx];
                  if (v > best) {
                    best = v;
                    best_idx = idx;
                  }
                }
              }
            }
            y.data[out_index] = best;
            if (cache) argmax_[out_index] = best_idx;
          }
        }
      }
    }
  }
  return y;
}

Tensor MaxPool3d::backward(const Tensor& grad_out) const {
  const auto& s = input_shape_;
  Tensor dx(s[0], s[1], s[2], s[3], s[4]);
  const std::size_t out_spatial = grad_out.spatial_size();
  const std::size_t in_spatial = dx.spatial_size();
  for (std::size_t plane = 0; plane < static_cast<std::size_t>(s[0]) * s[1]; ++plane) {
    for (std::size_t i = 0; i < out_spatial; ++i) {
      const std::size_t k = plane * out_spatial + i;
      if (argmax_[k] >= 0) dx.data[plane * in_spatial + argmax_[k]] += grad_out.data[k];
    }
  }
  return dx;
}

// ------------------------------------------------------------ BasicBlock

BasicBlock::BasicBlock(int in_channels, int out_channels, Dims3 stride, int kernel_depth)
    : conv1(in_channels, out_channels, {kernel_depth, 3, 3}, stride, {kernel_depth / 2, 1, 1}),
      bn1(out_channels),
      conv2(out_channels, out_channels, {kernel_depth, 3, 3}, {1, 1, 1}, {kernel_depth / 2, 1, 1}),
      bn2(out_channels) {
  const bool strided = stride.d != 1 || stride.h != 1 || stride.w != 1;
  if (strided || in_channels != out_channels) {
    projection = Projection{Conv3d(in_channels, out_channels, {1, 1, 1}, stride, {0, 0, 0}),
                            BatchNorm(out_channels)};
  }
}

void BasicBlock::init(std::mt19937_64& rng) {
  conv1.init(rng);
  conv2.init(rng);
  if (projection) projection->conv.init(rng);
}

Tensor BasicBlock::forward(const Tensor& x, Pass pass) {
  Tensor out = relu1_.forward(bn1.forward(conv1.forward(x, pass), pass), pass);
  out = bn2.forward(conv2.forward(out, pass), pass);
  if (projection) {
    const Tensor shortcut = projection->bn.forward(projection->conv.forward(x, pass), pass);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += shortcut.data[i];
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += x.data[i];
  }
  return relu_out_.forward(std::move(out), pass);
}

Tensor BasicBlock::backward(const Tensor& grad_out) {
  const Tensor g = relu_out_.backward(grad_out);
  Tensor dx = conv1.backward(bn1.backward(relu1_.backward(conv2.backward(bn2.backward(g)))));
  if (projection) {
    const Tensor ds = projection->conv.backward(projection->bn.backward(g));
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += ds.data[i];
  } else {
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += g.data[i];
  }
  return dx;
}

void BasicBlock::collect(std::vector<Param*>& params) {
  conv1.collect(params);
  bn1.collect(params);
  conv2.collect(params);
  bn2.collect(params);
  if (projection) {
    projection->conv.collect(params);
    projection->bn.collect(params);
  }
}

void BasicBlock::collect_buffers(std::vector<std::vector<float>*>& buffers) {
  for (BatchNorm* bn : {&bn1, &bn2}) {
    buffers.push_back(&bn->running_mean);
    buffers.push_back(&bn->running_var);
  }
  if (projection) {
    buffers.push_back(&projection->bn.running_mean);
    buffers.push_back(&projection->bn.running_var);
  }
}

// ---------------------------------------------------------------- Linear

Linear::Linear(int in_features, int out_features)
    : weight(static_cast<std::size_t>(in_features) * out_features),
      bias(out_features),
      in_(in_features),
      out_(out_features) {}

void Linear::init(std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : weight.value) v = static_cast<float>(dist(rng));
  for (auto& v : bias.value) v = static_cast<float>(dist(rng));
}

Tensor Linear::forward(const Tensor& x, Pass pass) {
  if (static_cast<int>(x.sample_size()) != in_) throw ConfigError("linear input width mismatch");
  Tensor y(x.n(), out_, 1, 1, 1);
  Eigen::Map<const MatR> in(x.data.data(), x.n(), in_);
  Eigen::Map<const MatR> w(weight.value.data(), out_, in_);
  Eigen::Map<MatR> out(y.data.data(), x.n(), out_);
  out.noalias() = in * w.transpose();
  for (int n = 0; n < x.n(); ++n) {
    for (int o = 0; o < out_; ++o) out(n, o) += bias.value[o];
  }
  if (pass != Pass::inference) input_ = x;
  return y;
}

Tensor Linear::backward(const Tensor& grad_out) {
  const int batch = input_.n();
  Eigen::Map<const MatR> in(input_.data.data(), batch, in_);
  Eigen::Map<const MatR> w(weight.value.data(), out_, in_);
  Eigen::Map<const MatR> dy(grad_out.data.data(), batch, out_);
  Eigen::Map<MatR>(weight.grad.data(), out_, in_).noalias() += dy.transpose() * in;
  for (int n = 0; n < batch; ++n) {
    for (int o = 0; o < out_; ++o) bias.grad[o] += dy(n, o);
  }
  Tensor dx(input_.n(), input_.c(), input_.d(), input_.h(), input_.w());
  Eigen::Map<MatR>(dx.data.data(), batch, in_).noalias() = dy * w;
  return dx;
}

void Linear::collect(std::vector<Param*>& params) {
  params.push_back(&weight);
  params.push_back(&bias);
}

// ------------------------------------------------------------------ pool

Tensor global_avg_pool(const Tensor& x) {
  Tensor y(x.n(), x.c(), 1, 1, 1);
  const std::size_t spatial = x.spatial_size();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const float* p = x.sample(n) + c * spatial;
      double sum = 0.0;
      for (std::size_t i = 0; i < spatial; ++i) sum += p[i];
      y.at(n, c, 0, 0, 0) = static_cast<float>(sum / static_cast<double>(spatial));
    }
  }
  return y;
}

Tensor global_avg_pool_backward(const Tensor& grad_out, const std::array<int, 5>& s) {
  Tensor dx(s[0], s[1], s[2], s[3], s[4]);
  const std::size_t spatial = dx.spatial_size();
  const float scale = 1.0f / static_cast<float>(spatial);
  for (int n = 0; n < s[0]; ++n) {
    for (int c = 0; c < s[1]; ++c) {
      const float g = grad_out.at(n, c, 0, 0, 0) * scale;
      float* p = dx.sample(n) + c * spatial;
      std::fill_n(p, spatial, g);
    }
  }
  return dx;
}

}  // namespace echomil::nn
