#pragma once

#include "phonogan/tensor.hpp"

#include <vector>

namespace phonogan::nn {

struct AdamConfig {
  double alpha = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double epsilon = 1e-8;
};

/// First/second moment estimates for one fixed list of parameters.
struct AdamState {
  AdamConfig cfg;
  std::vector<Array> m;
  std::vector<Array> v;
  long step = 0;

  AdamState() = default;
  AdamState(const std::vector<Tensor>& params, AdamConfig cfg);
};

/// Standard Adam update with bias correction. grads[i] pairs with params[i];
/// a missing or mis-sized gradient is rejected.
void adam_step(std::vector<Tensor>& params, const std::vector<Array>& grads, AdamState& state);

/// Convenience overload reading each parameter's accumulated .grad.
void adam_step(std::vector<Tensor>& params, AdamState& state);

}  // namespace phonogan::nn
