// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmrobust/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mmr {

PolicyMatrix::PolicyMatrix(std::size_t depth) : depth_(depth), q_({depth, depth}, 0.0) {
  if (depth == 0) throw std::invalid_argument("policy matrix needs depth >= 1");
  for (std::size_t i = 0; i < depth; ++i)
    for (std::size_t j = 0; j <= i; ++j) q_.at(i, j) = 1.0;
}

std::size_t FusionVector::fusion_index() const { return mmr::fusion_index(s); }

std::size_t argmax_tiebreak(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

bool is_suffix_ones(std::span<const int> s) {
  if (s.empty() || s.back() != 1) return false;
  bool seen_one = false;
  for (int v : s) {
    if (v != 0 && v != 1) return false;
    if (v == 1) seen_one = true;
    if (v == 0 && seen_one) return false;
  }
  return true;
}

std::size_t fusion_index(std::span<const int> s) {
  if (!is_suffix_ones(s)) throw std::invalid_argument("fusion vector is not of the form (0,...,0,1,...,1)");
  return static_cast<std::size_t>(std::find(s.begin(), s.end(), 1) - s.begin());
}

std::vector<int> fusion_from_index(std::size_t first_fused, std::size_t depth) {
  if (first_fused >= depth) {
    throw std::invalid_argument("fusion index " + std::to_string(first_fused) + " outside depth " +
                                std::to_string(depth));
  }
  std::vector<int> s(depth, 0);
  std::fill(s.begin() + static_cast<long>(first_fused), s.end(), 1);
  return s;
}

std::vector<double> softmax_values(std::span<const double> alpha) {
  if (alpha.empty()) throw std::invalid_argument("softmax of an empty vector");
  const double mx = *std::max_element(alpha.begin(), alpha.end());
  std::vector<double> p(alpha.size());
  double z = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) z += (p[i] = std::exp(alpha[i] - mx));
  for (auto& v : p) v /= z;
  return p;
}

FusionVector sample_policy(std::span<const double> alpha) {
  for (double a : alpha) {
    if (!std::isfinite(a)) throw std::invalid_argument("policy parameters must be finite");
  }
  FusionVector f;
  f.soft = softmax_values(alpha);
  f.s = fusion_from_index(argmax_tiebreak(f.soft), alpha.size());
  return f;
}

PolicySample sample_policy(Tape& tape, Var alpha) {
  const Tensor& av = alpha.value();
  if (av.rank() != 1) throw DimensionError("sample_policy: alpha must be a vector, got " + shape_str(av.shape()));
  for (double a : av.values()) {
    if (!std::isfinite(a)) throw std::invalid_argument("policy parameters must be finite");
  }
  const std::size_t depth = av.size();
  PolicySample out;
  out.soft = softmax(alpha);
  out.hard = straight_through_onehot(out.soft);
  const PolicyMatrix q(depth);
  Var column = reshape(out.hard, Shape{depth, 1});
  out.s = reshape(matmul(tape.constant(q.tensor()), column), Shape{depth});
  out.fusion.soft = out.soft.value().values();
  out.fusion.s.resize(depth);
  for (std::size_t i = 0; i < depth; ++i) out.fusion.s[i] = static_cast<int>(out.s.value()[i]);
  return out;
}

}  // namespace mmr
