#pragma once

#include <cstdint>
#include <vector>

#include "spotlight/diff/tensor.hpp"

namespace spotlight::diff {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Per-parameter moments plus the shared step counter.
struct AdamWState {
  AdamWConfig config;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t t = 0;
};

AdamWState make_adamw(const std::vector<Tensor<float>>& params, AdamWConfig config);

/// Decoupled weight decay with bias-corrected moments. Reads each
/// parameter's accumulated gradient (zero when absent) and updates in place.
void adamw_step(std::vector<Tensor<float>>& params, AdamWState& state);

}  // namespace spotlight::diff
