// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

// Bi-level search over the fusion layer.
//
// Each outer iteration draws one training and one validation batch, snapshots
// theta, runs K optimizer steps on the training loss (a fresh policy sample
// per step), keeps the result as the new theta, then takes one Adam step on
// alpha against the validation loss evaluated at the new theta. The alpha
// gradient flows only through the straight-through path of the policy used in
// that validation pass; theta is treated as constant in alpha.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmrobust/data.hpp"
#include "mmrobust/model.hpp"
#include "mmrobust/multitask.hpp"
#include "mmrobust/policy.hpp"

namespace mmr {

enum class InnerOptimizer { sgd, adam };
std::string to_string(InnerOptimizer o);
InnerOptimizer parse_inner_optimizer(const std::string& s);

// How the hard policy enters the validation loss.
//   layer:  each fused-stream layer mixes full and block attention by s_l with
//           s = Q * s_h; gradients are the linearisation in s.
//   policy: the validation loss is sum_j s_h[j] * L(policy j); in value this is
//           the loss of the selected policy, and d/ds_h[j] is the loss of
//           policy j.
enum class Relaxation { layer, policy };
std::string to_string(Relaxation r);
Relaxation parse_relaxation(const std::string& s);

struct SearchConfig {
  std::size_t inner_steps = 4;      // K
  double inner_lr = 0.05;           // gamma
  // sgd: theta -= gamma * grad. adam: decoupled AdamW with lr gamma whose
  // moments persist across outer steps.
  InnerOptimizer inner_optimizer = InnerOptimizer::sgd;
  double inner_weight_decay = 0.0;  // adam only
  double outer_lr = 3e-3;           // beta, Adam on alpha
  double outer_weight_decay = 3e-5;
  std::size_t max_outer_steps = 200;
  // Outer steps at the start that train theta only, with fusion at every
  // layer. Alpha stays fixed during warmup.
  std::size_t warmup_steps = 0;
  std::size_t patience = 20;        // converged once argmax holds this many outer steps
  std::size_t batch_size = 32;
  Relaxation relaxation = Relaxation::layer;
  double alpha_init_std = 0.0;      // 0 starts from uniform alpha
  std::uint64_t seed = 0;

  void validate() const;
};

struct SearchResult {
  std::vector<double> alpha;
  FusionVector policy;
  std::vector<PolicyHistoryRow> history;
  bool converged = false;
  // Outer steps whose policy sample differed from the inner-loop samples.
  std::size_t argmax_mismatches = 0;
};

class SearchDiverged : public std::runtime_error {
 public:
  SearchDiverged(const std::string& what, std::vector<PolicyHistoryRow> history)
      : std::runtime_error(what), history_(std::move(history)) {}
  const std::vector<PolicyHistoryRow>& history() const { return history_; }

 private:
  std::vector<PolicyHistoryRow> history_;
};

SearchResult bilevel_search(Model& model, std::span<const Sample> train, std::span<const Sample> val,
                            const SearchConfig& cfg, const TaskWeights& weights);

}  // namespace mmr
