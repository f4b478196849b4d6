#pragma once

#include "phonogan/ops.hpp"
#include "phonogan/tensor.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace testutil {

using phonogan::nn::Array;
using phonogan::nn::Rng;
using phonogan::nn::Tensor;

// Central finite differences against the analytic gradient from backward().
// f must rebuild its graph from the current leaf values on every call.
inline double max_grad_rel_err(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                               std::vector<Tensor>& inputs, double h = 1e-5) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  Tensor out = f(inputs);
  phonogan::nn::backward(out);

  double worst = 0.0;
  for (auto& in : inputs) {
    for (long i = 0; i < in.numel(); ++i) {
      double orig = in.values()[i];
      in.values()[i] = orig + h;
      double fp = f(inputs).item();
      in.values()[i] = orig - h;
      double fm = f(inputs).item();
      in.values()[i] = orig;
      double numeric = (fp - fm) / (2.0 * h);
      double analytic = in.has_grad() ? in.grad()[i] : 0.0;
      double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-6});
      worst = std::max(worst, std::fabs(numeric - analytic) / denom);
    }
  }
  return worst;
}

// Independent loop oracle for strided cross-correlation with the symmetric
// zero-padding rule (output length ceil(T/stride), odd pad extra on the right).
inline std::vector<double> conv1d_oracle(const std::vector<double>& x, int ci, int t,
                                         const std::vector<double>& k, int co, int kw,
                                         int stride) {
  int t_out = (t + stride - 1) / stride;
  int span = (t_out - 1) * stride + kw;
  int pad_left = std::max(0, span - t) / 2;
  std::vector<double> y(static_cast<size_t>(co) * t_out, 0.0);
  for (int o = 0; o < co; ++o)
    for (int tt = 0; tt < t_out; ++tt) {
      double acc = 0.0;
      for (int c = 0; c < ci; ++c)
        for (int j = 0; j < kw; ++j) {
          int pos = tt * stride + j - pad_left;
          if (pos >= 0 && pos < t)
            acc += k[(static_cast<size_t>(o) * ci + c) * kw + j] * x[static_cast<size_t>(c) * t + pos];
        }
      y[static_cast<size_t>(o) * t_out + tt] = acc;
    }
  return y;
}

// Independent scatter oracle for the fractionally-strided convolution with
// the centered trim rule (full length (T-1)*s + K, trimmed to T*s).
inline std::vector<double> tconv1d_oracle(const std::vector<double>& x, int ci, int t,
                                          const std::vector<double>& k, int co, int kw,
                                          int stride) {
  int full = (t - 1) * stride + kw;
  std::vector<double> scat(static_cast<size_t>(co) * full, 0.0);
  for (int c = 0; c < ci; ++c)
    for (int o = 0; o < co; ++o)
      for (int tt = 0; tt < t; ++tt)
        for (int j = 0; j < kw; ++j)
          scat[static_cast<size_t>(o) * full + tt * stride + j] +=
              x[static_cast<size_t>(c) * t + tt] * k[(static_cast<size_t>(c) * co + o) * kw + j];
  int t_out = t * stride;
  int delta = kw - stride;
  int off = delta >= 0 ? delta / 2 : -((-delta) / 2);
  std::vector<double> y(static_cast<size_t>(co) * t_out, 0.0);
  for (int o = 0; o < co; ++o)
    for (int tt = 0; tt < t_out; ++tt) {
      int src = tt + off;
      if (src >= 0 && src < full) y[static_cast<size_t>(o) * t_out + tt] = scat[static_cast<size_t>(o) * full + src];
    }
  return y;
}

inline Tensor random_tensor(Rng& rng, phonogan::nn::Shape shape, double lo = -1.0, double hi = 1.0) {
  return phonogan::nn::uniform(rng, std::move(shape), lo, hi);
}

}  // namespace testutil
