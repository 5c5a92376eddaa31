// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmrobust/autodiff.hpp"

namespace mmr {

class NonFiniteGradientError : public std::runtime_error {
 public:
  NonFiniteGradientError(const std::string& param, std::size_t index)
      : std::runtime_error("non-finite gradient in parameter '" + param + "' at element " + std::to_string(index)),
        param_(param) {}
  const std::string& parameter() const { return param_; }

 private:
  std::string param_;
};

struct AdamConfig {
  double lr = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 2e-2;  // decoupled: p <- p - lr * wd * p
};

struct AdamState {
  std::size_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

// One AdamW update over every parameter using its current grad.
void adam_step(ParameterSet& params, AdamState& state, const AdamConfig& cfg);

// p <- p - lr * grad.
void sgd_step(ParameterSet& params, double lr);

// Throws NonFiniteGradientError naming the first offending parameter.
void check_finite_grads(const ParameterSet& params);

}  // namespace mmr
