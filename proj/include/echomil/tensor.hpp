#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace echomil {

/// Dense float tensor in N x C x D x H x W layout. 2D images use D = 1.
struct Tensor {
  std::array<int, 5> shape{0, 0, 0, 0, 0};
  std::vector<float> data;

  Tensor() = default;
  Tensor(int n, int c, int d, int h, int w, float fill = 0.0f)
      : shape{n, c, d, h, w},
        data(static_cast<std::size_t>(n) * c * d * h * w, fill) {}

  int n() const { return shape[0]; }
  int c() const { return shape[1]; }
  int d() const { return shape[2]; }
  int h() const { return shape[3]; }
  int w() const { return shape[4]; }

  std::size_t size() const { return data.size(); }
  std::size_t sample_size() const {
    return static_cast<std::size_t>(shape[1]) * shape[2] * shape[3] * shape[4];
  }
  std::size_t spatial_size() const {
    return static_cast<std::size_t>(shape[2]) * shape[3] * shape[4];
  }

  float* sample(int i) { return data.data() + i * sample_size(); }
  const float* sample(int i) const { return data.data() + i * sample_size(); }

  float& at(int n_, int c_, int d_, int h_, int w_) {
    return data[(((static_cast<std::size_t>(n_) * shape[1] + c_) * shape[2] + d_) *
                     shape[3] + h_) * shape[4] + w_];
  }
  float at(int n_, int c_, int d_, int h_, int w_) const {
    return data[(((static_cast<std::size_t>(n_) * shape[1] + c_) * shape[2] + d_) *
                     shape[3] + h_) * shape[4] + w_];
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

}  // namespace echomil
