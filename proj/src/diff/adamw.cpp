#include "spotlight/diff/adamw.hpp"

#include <cmath>
#include <string>

namespace spotlight::diff {

AdamWState make_adamw(const std::vector<Tensor<float>>& params, AdamWConfig config) {
  AdamWState state;
  state.config = config;
  for (const auto& p : params) {
    state.m.emplace_back(p.numel(), 0.0);
    state.v.emplace_back(p.numel(), 0.0);
  }
  return state;
}

void adamw_step(std::vector<Tensor<float>>& params, AdamWState& state) {
  if (params.size() != state.m.size()) {
    throw DimensionError("adamw_step: " + std::to_string(params.size()) +
                         " parameters for state of " + std::to_string(state.m.size()));
  }
  const auto& c = state.config;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& param = params[p];
    auto& m = state.m[p];
    auto& v = state.v[p];
    if (m.size() != param.numel()) {
      throw DimensionError("adamw_step: moment size mismatch for parameter " +
                           std::to_string(p) + " of shape " + to_string(param.shape()));
    }
    auto values = param.mutable_data();
    auto grads = param.mutable_grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grads[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      double x = values[i];
      x -= c.lr * c.weight_decay * x;
      x -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
      values[i] = static_cast<float>(x);
    }
  }
}

}  // namespace spotlight::diff
