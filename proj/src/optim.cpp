// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmrobust/optim.hpp"

#include <cmath>

namespace mmr {

void check_finite_grads(const ParameterSet& params) {
  for (const auto& p : params.items()) {
    if (p.grad.shape() != p.value.shape()) {
      throw std::invalid_argument("parameter '" + p.name + "' has no gradient of matching shape");
    }
    for (std::size_t i = 0; i < p.grad.size(); ++i) {
      if (!std::isfinite(p.grad[i])) throw NonFiniteGradientError(p.name, i);
    }
  }
}

void adam_step(ParameterSet& params, AdamState& state, const AdamConfig& cfg) {
  check_finite_grads(params);
  auto& items = params.items();
  if (state.m.empty()) {
    for (const auto& p : items) {
      state.m.emplace_back(p.value.shape(), 0.0);
      state.v.emplace_back(p.value.shape(), 0.0);
    }
  }
  if (state.m.size() != items.size()) throw std::invalid_argument("adam_step: state does not match parameter set");

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < items.size(); ++k) {
    Parameter& p = items[k];
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    if (m.shape() != p.value.shape()) throw std::invalid_argument("adam_step: moment shape mismatch for " + p.name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p.value[i] -= cfg.lr * cfg.weight_decay * p.value[i];
      p.value[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

void sgd_step(ParameterSet& params, double lr) {
  check_finite_grads(params);
  for (auto& p : params.items()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= lr * p.grad[i];
  }
}

}  // namespace mmr
