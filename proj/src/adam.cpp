#include "phonogan/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace phonogan::nn {

AdamState::AdamState(const std::vector<Tensor>& params, AdamConfig c) : cfg(c) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const auto& p : params) {
    m.push_back(Array::Zero(p.numel()));
    v.push_back(Array::Zero(p.numel()));
  }
}

void adam_step(std::vector<Tensor>& params, const std::vector<Array>& grads, AdamState& st) {
  if (grads.size() != params.size() || st.m.size() != params.size())
    throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
  for (size_t i = 0; i < params.size(); ++i)
    if (grads[i].size() != params[i].numel())
      throw std::invalid_argument("adam_step: missing or mis-sized gradient for parameter " +
                                  std::to_string(i));
  st.step += 1;
  double bc1 = 1.0 - std::pow(st.cfg.beta1, static_cast<double>(st.step));
  double bc2 = 1.0 - std::pow(st.cfg.beta2, static_cast<double>(st.step));
  for (size_t i = 0; i < params.size(); ++i) {
    st.m[i] = st.cfg.beta1 * st.m[i] + (1.0 - st.cfg.beta1) * grads[i];
    st.v[i] = st.cfg.beta2 * st.v[i] + (1.0 - st.cfg.beta2) * grads[i].square();
    Array mhat = st.m[i] / bc1;
    Array vhat = st.v[i] / bc2;
    params[i].values() -= st.cfg.alpha * mhat / (vhat.sqrt() + st.cfg.epsilon);
  }
}

void adam_step(std::vector<Tensor>& params, AdamState& st) {
  std::vector<Array> grads;
  grads.reserve(params.size());
  for (auto& p : params) {
    if (!p.has_grad())
      throw std::invalid_argument("adam_step: parameter has no accumulated gradient");
    grads.push_back(p.grad());
  }
  adam_step(params, grads, st);
}

}  // namespace phonogan::nn
