#pragma once

#include <cstdint>
#include <string>

namespace echomil {

enum class Optimizer { sgd, sgd_momentum };

std::string to_string(Optimizer optimizer);

/// Optimization settings. No data augmentation is applied beyond the
/// per-epoch frame draw.
struct TrainConfig {
  double learning_rate = 1e-4;
  Optimizer optimizer = Optimizer::sgd;
  double momentum = 0.9;  // only used by sgd_momentum
  int batch_size = 32;
  int epochs = 100;
  std::uint64_t seed = 0;
  bool use_brs = true;  // false: always the first frame of each block

  void validate() const;
};

}  // namespace echomil
