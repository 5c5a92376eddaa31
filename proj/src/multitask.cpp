// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmrobust/multitask.hpp"

#include <cmath>
#include <stdexcept>

namespace mmr {

void TaskWeights::validate() const {
  for (double w : {lambda1, lambda2, lambda3}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("task weights must be finite and non-negative");
  }
  if (lambda1 + lambda2 + lambda3 <= 0.0) throw std::invalid_argument("at least one task weight must be positive");
}

std::string to_string(Task t) {
  switch (t) {
    case Task::joint: return "joint";
    case Task::m1_only: return "m1_only";
    case Task::m2_only: return "m2_only";
  }
  return "?";
}

std::string to_string(HeadRule r) { return r == HeadRule::availability ? "availability" : "joint_only"; }

HeadRule parse_head_rule(const std::string& s) {
  if (s == "availability") return HeadRule::availability;
  if (s == "joint_only") return HeadRule::joint_only;
  throw std::invalid_argument("unknown head rule '" + s + "'");
}

Var task_loss(Var logits, const Label& label, TaskType task_type) {
  Tape& tape = *logits.tape();
  const std::size_t width = logits.value().size();
  switch (task_type) {
    case TaskType::multiclass: {
      if (label.index < 0 || static_cast<std::size_t>(label.index) >= width) {
        throw std::out_of_range("label " + std::to_string(label.index) + " out of range for " + std::to_string(width) +
                                " classes");
      }
      return scale(element(log_softmax(logits), static_cast<std::size_t>(label.index)), -1.0);
    }
    case TaskType::binary: {
      if (width != 1) throw DimensionError("binary task expects a single logit, got " + std::to_string(width));
      if (label.index != 0 && label.index != 1) {
        throw std::out_of_range("binary label must be 0 or 1, got " + std::to_string(label.index));
      }
      Var y = tape.constant(Tensor::scalar(label.index));
      return sub(element(softplus(logits), 0), mul(element(logits, 0), y));
    }
    case TaskType::multilabel: {
      if (label.bits.size() != width) {
        throw std::out_of_range("multilabel target has " + std::to_string(label.bits.size()) + " entries, expected " +
                                std::to_string(width));
      }
      Tensor y(logits.shape());
      for (std::size_t c = 0; c < width; ++c) {
        if (label.bits[c] > 1) throw std::out_of_range("multilabel targets must be 0/1");
        y[c] = label.bits[c];
      }
      return mean(sub(softplus(logits), mul(logits, tape.constant(std::move(y)))));
    }
  }
  throw std::logic_error("unhandled task type");
}

BatchLoss total_loss(Tape& tape, Model& model, std::span<const Sample> batch, const TaskWeights& weights,
                     const LayerGates& gates, std::span<const int> joint_hide) {
  if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");
  if (!joint_hide.empty() && joint_hide.size() != batch.size()) {
    throw std::invalid_argument("total_loss: joint_hide must match the batch size");
  }
  weights.validate();
  const TaskType tt = model.config().task_type;
  std::vector<Var> l1, l2, l3;
  BatchLoss out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Sample& x = batch[i];
    const int hide = joint_hide.empty() ? 0 : joint_hide[i];
    const bool use_m1 = x.present1;
    const bool use_m2 = x.present2;
    const bool use_joint = x.complete();
    out.report.n_m1 += use_m1;
    out.report.n_m2 += use_m2;
    out.report.n_joint += use_joint;

    const bool eval_uni = (use_m1 && weights.lambda1 > 0) || (use_m2 && weights.lambda2 > 0);
    const bool eval_joint = use_joint && weights.lambda3 > 0;
    if (hide == 0) {
      if (!eval_uni && !eval_joint) continue;
      ForwardResult r = model_forward(tape, model, x, gates, {eval_joint, eval_uni});
      if (eval_joint) l3.push_back(task_loss(r.logits_joint, x.label, tt));
      if (use_m1 && weights.lambda1 > 0) l1.push_back(task_loss(r.logits_m1, x.label, tt));
      if (use_m2 && weights.lambda2 > 0) l2.push_back(task_loss(r.logits_m2, x.label, tt));
    } else {
      // The joint task sees the sample with one modality removed; the
      // single-modality tasks see it intact.
      if (eval_uni) {
        ForwardResult r = model_forward(tape, model, x, gates, {false, true});
        if (use_m1 && weights.lambda1 > 0) l1.push_back(task_loss(r.logits_m1, x.label, tt));
        if (use_m2 && weights.lambda2 > 0) l2.push_back(task_loss(r.logits_m2, x.label, tt));
      }
      if (eval_joint) {
        Sample hidden = x;
        if (hide == 1) {
          hidden.present1 = false;
          hidden.tokens1.clear();
        } else {
          hidden.present2 = false;
          hidden.tokens2.clear();
        }
        ForwardResult r = model_forward(tape, model, hidden, gates, {true, false});
        l3.push_back(task_loss(r.logits_joint, x.label, tt));
      }
    }
  }

  auto task_mean = [](const std::vector<Var>& losses, double& value_out) -> Var {
    Var acc = losses.front();
    for (std::size_t i = 1; i < losses.size(); ++i) acc = add(acc, losses[i]);
    Var m = scale(acc, 1.0 / static_cast<double>(losses.size()));
    value_out = m.item();
    return m;
  };
  Var total;
  auto accumulate = [&](const std::vector<Var>& losses, double weight, double& value_out) {
    if (losses.empty()) return;
    Var term = scale(task_mean(losses, value_out), weight);
    total = total.valid() ? add(total, term) : term;
  };
  accumulate(l1, weights.lambda1, out.report.loss_m1);
  accumulate(l2, weights.lambda2, out.report.loss_m2);
  accumulate(l3, weights.lambda3, out.report.loss_joint);
  out.total = total.valid() ? total : tape.constant(Tensor::scalar(0.0));
  out.report.total = weights.lambda1 * out.report.loss_m1 + weights.lambda2 * out.report.loss_m2 +
                     weights.lambda3 * out.report.loss_joint;
  return out;
}

Prediction predict(Model& model, const Sample& sample, std::span<const int> policy, HeadRule rule) {
  Tape tape;
  LayerGates gates{std::vector<int>(policy.begin(), policy.end()), {}};
  Prediction p;
  if (rule == HeadRule::joint_only || sample.complete()) {
    p.chosen = Task::joint;
  } else {
    p.chosen = sample.present1 ? Task::m1_only : Task::m2_only;
  }
  const bool joint = p.chosen == Task::joint;
  ForwardResult r = model_forward(tape, model, sample, gates, {joint, !joint});
  Var chosen = joint ? r.logits_joint : (p.chosen == Task::m1_only ? r.logits_m1 : r.logits_m2);
  p.logits = chosen.value().values();
  return p;
}

}  // namespace mmr
