// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmrobust/search.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mmrobust/optim.hpp"

namespace mmr {

std::string to_string(InnerOptimizer o) { return o == InnerOptimizer::sgd ? "sgd" : "adam"; }

InnerOptimizer parse_inner_optimizer(const std::string& s) {
  if (s == "sgd") return InnerOptimizer::sgd;
  if (s == "adam") return InnerOptimizer::adam;
  throw std::invalid_argument("unknown inner optimizer '" + s + "' (expected sgd or adam)");
}

std::string to_string(Relaxation r) { return r == Relaxation::layer ? "layer" : "policy"; }

Relaxation parse_relaxation(const std::string& s) {
  if (s == "layer") return Relaxation::layer;
  if (s == "policy") return Relaxation::policy;
  throw std::invalid_argument("unknown relaxation '" + s + "' (expected layer or policy)");
}

void SearchConfig::validate() const {
  if (inner_steps == 0) throw std::invalid_argument("search: inner_steps must be >= 1");
  if (!(inner_lr > 0.0)) throw std::invalid_argument("search: inner_lr must be positive");
  if (!(inner_weight_decay >= 0.0)) throw std::invalid_argument("search: inner_weight_decay must be non-negative");
  if (!(outer_lr >= 0.0)) throw std::invalid_argument("search: outer_lr must be non-negative");
  if (batch_size == 0) throw std::invalid_argument("search: batch_size must be positive");
  if (patience == 0) throw std::invalid_argument("search: patience must be >= 1");
}

namespace {

std::vector<Sample> draw_batch(std::span<const Sample> pool, std::size_t n, std::mt19937_64& rng) {
  std::vector<Sample> out;
  out.reserve(n);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  for (std::size_t i = 0; i < std::min(n, pool.size()); ++i) out.push_back(pool[pick(rng)]);
  return out;
}

// sum_j s_h[j] * L_joint(policy j) plus the single-modality terms, which do
// not depend on the policy.
BatchLoss policy_mixture_loss(Tape& tape, Model& model, std::span<const Sample> batch, const TaskWeights& weights,
                              const PolicySample& ps) {
  const std::size_t depth = model.config().layers;
  const std::size_t chosen = ps.fusion.fusion_index();
  BatchLoss out;
  Var total;
  if (weights.lambda1 > 0 || weights.lambda2 > 0) {
    BatchLoss uni = total_loss(tape, model, batch, {weights.lambda1, weights.lambda2, 0.0}, LayerGates{ps.fusion.s, {}});
    out.report = uni.report;
    total = uni.total;
  }
  if (weights.lambda3 > 0) {
    for (std::size_t j = 0; j < depth; ++j) {
      BatchLoss lj = total_loss(tape, model, batch, {0.0, 0.0, weights.lambda3}, LayerGates{fusion_from_index(j, depth), {}});
      if (j == chosen) {
        out.report.loss_joint = lj.report.loss_joint;
        out.report.n_joint = lj.report.n_joint;
      }
      Var term = mul(element(ps.hard, j), lj.total);
      total = total.valid() ? add(total, term) : term;
    }
  }
  out.report.total = weights.lambda1 * out.report.loss_m1 + weights.lambda2 * out.report.loss_m2 +
                     weights.lambda3 * out.report.loss_joint;
  out.total = total;
  return out;
}

}  // namespace

SearchResult bilevel_search(Model& model, std::span<const Sample> train, std::span<const Sample> val,
                            const SearchConfig& cfg, const TaskWeights& weights) {
  cfg.validate();
  weights.validate();
  if (val.empty()) throw std::invalid_argument("bilevel_search: empty validation set");
  if (train.empty()) throw std::invalid_argument("bilevel_search: empty training set");

  const std::size_t depth = model.config().layers;
  std::mt19937_64 rng(cfg.seed);
  ParameterSet policy_params;
  {
    Tensor init({depth}, 0.0);
    if (cfg.alpha_init_std > 0.0) {
      std::normal_distribution<double> normal(0.0, cfg.alpha_init_std);
      for (auto& a : init.values()) a = normal(rng);
    }
    policy_params.add("alpha", std::move(init));
  }
  Parameter& alpha = policy_params.get("alpha");
  const AdamConfig outer_adam{cfg.outer_lr, 0.9, 0.999, 1e-8, cfg.outer_weight_decay};
  AdamState outer_state;
  const AdamConfig inner_adam{cfg.inner_lr, 0.9, 0.999, 1e-8, cfg.inner_weight_decay};
  AdamState inner_state;

  SearchResult result;
  std::size_t stable = 0;
  for (std::size_t outer = 0; outer < cfg.max_outer_steps; ++outer) {
    const std::vector<Sample> train_batch = draw_batch(train, cfg.batch_size, rng);
    const std::vector<Sample> val_batch = draw_batch(val, cfg.batch_size, rng);

    // Lower level on theta.
    std::size_t inner_argmax = 0;
    for (std::size_t k = 0; k < cfg.inner_steps; ++k) {
      FusionVector f = sample_policy(alpha.value.values());
      inner_argmax = f.fusion_index();
      if (outer < cfg.warmup_steps) f.s.assign(depth, 1);
      model.params().zero_grad();
      Tape tape;
      BatchLoss loss = total_loss(tape, model, train_batch, weights, LayerGates{f.s, {}});
      if (!std::isfinite(loss.report.total)) {
        throw SearchDiverged("non-finite training loss in inner loop", result.history);
      }
      tape.backward(loss.total);
      if (cfg.inner_optimizer == InnerOptimizer::sgd) {
        sgd_step(model.params(), cfg.inner_lr);
      } else {
        adam_step(model.params(), inner_state, inner_adam);
      }
    }

    // Upper level: alpha <- Adam(grad_alpha L_val(theta*)).
    policy_params.zero_grad();
    model.params().zero_grad();
    Tape tape;
    PolicySample ps = sample_policy(tape, tape.parameter(alpha));
    BatchLoss val_loss = cfg.relaxation == Relaxation::layer
                             ? total_loss(tape, model, val_batch, weights, LayerGates{ps.fusion.s, ps.s})
                             : policy_mixture_loss(tape, model, val_batch, weights, ps);
    const std::size_t argmax = ps.fusion.fusion_index();
    result.history.push_back({outer, argmax, val_loss.report.total, ps.fusion.soft});
    if (!std::isfinite(val_loss.report.total)) {
      throw SearchDiverged("validation loss diverged at outer step " + std::to_string(outer), result.history);
    }
    if (argmax != inner_argmax) ++result.argmax_mismatches;
    if (outer < cfg.warmup_steps) continue;
    tape.backward(val_loss.total);
    adam_step(policy_params, outer_state, outer_adam);
    model.params().zero_grad();

    const std::size_t now = argmax_tiebreak(softmax_values(alpha.value.values()));
    stable = now == argmax ? stable + 1 : 0;
    if (stable >= cfg.patience) {
      result.converged = true;
      break;
    }
  }
  result.alpha = alpha.value.values();
  result.policy = sample_policy(result.alpha);
  return result;
}

}  // namespace mmr
