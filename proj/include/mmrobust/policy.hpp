// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

// Fusion policy sampling. One real parameter per layer; the soft policy is
// softmax(alpha), the hard policy its one-hot argmax with a straight-through
// gradient, and the per-layer fusion vector is Q * hard with Q the M x M
// lower-triangular all-ones matrix. Column j of Q fuses layers j..M-1, so the
// reachable fusion vectors are exactly the M suffix-ones vectors.
//
// Layer and argmax indices are 0-based throughout.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mmrobust/autodiff.hpp"

namespace mmr {

class PolicyMatrix {
 public:
  explicit PolicyMatrix(std::size_t depth);
  std::size_t size() const { return depth_; }
  int operator()(std::size_t i, std::size_t j) const { return i >= j ? 1 : 0; }
  const Tensor& tensor() const { return q_; }

 private:
  std::size_t depth_;
  Tensor q_;
};

struct FusionVector {
  std::vector<int> s;
  std::vector<double> soft;  // distribution the vector was drawn from, if any
  std::size_t fusion_index() const;
};

// Lowest index among the maxima.
std::size_t argmax_tiebreak(std::span<const double> values);

bool is_suffix_ones(std::span<const int> s);
// First fused layer of a suffix-ones vector; throws std::invalid_argument
// otherwise.
std::size_t fusion_index(std::span<const int> s);
std::vector<int> fusion_from_index(std::size_t first_fused, std::size_t depth);

std::vector<double> softmax_values(std::span<const double> alpha);

// Value-only sampling (no tape).
FusionVector sample_policy(std::span<const double> alpha);

struct PolicySample {
  FusionVector fusion;
  Var soft;  // softmax(alpha)
  Var hard;  // straight-through one-hot
  Var s;     // Q * hard
};

PolicySample sample_policy(Tape& tape, Var alpha);

// One outer step of a policy search trajectory.
struct PolicyHistoryRow {
  std::size_t outer_step = 0;
  std::size_t argmax = 0;
  double val_loss = 0.0;
  std::vector<double> soft;
  friend bool operator==(const PolicyHistoryRow&, const PolicyHistoryRow&) = default;
};

}  // namespace mmr
