// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

// Weighted three-task objective:
//   total = lambda1 * L_m1 + lambda2 * L_m2 + lambda3 * L_joint
// Each task loss is a mean over the batch samples the task applies to:
// L_m1 needs modality 1, L_m2 needs modality 2, L_joint needs both.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mmrobust/autodiff.hpp"
#include "mmrobust/data.hpp"
#include "mmrobust/model.hpp"

namespace mmr {

struct TaskWeights {
  double lambda1 = 1.0;  // modality-1-only task
  double lambda2 = 1.0;  // modality-2-only task
  double lambda3 = 1.0;  // joint task
  void validate() const;
};

enum class Task { joint, m1_only, m2_only };
std::string to_string(Task t);

// A task whose weight is zero is not evaluated; its loss reads 0 while its
// count still reflects how many samples it would apply to.
struct LossReport {
  double loss_m1 = 0.0;
  double loss_m2 = 0.0;
  double loss_joint = 0.0;
  double total = 0.0;
  std::size_t n_m1 = 0;
  std::size_t n_m2 = 0;
  std::size_t n_joint = 0;
};

// multilabel: mean BCE over classes on sigmoid(logits); multiclass: softmax
// cross-entropy; binary: BCE on a single logit.
Var task_loss(Var logits, const Label& label, TaskType task_type);

struct BatchLoss {
  Var total;
  LossReport report;
};

// `joint_hide[i]` in {0, 1, 2}: modality hidden from the joint task for
// sample i (training-time modality dropout). Empty means none.
BatchLoss total_loss(Tape& tape, Model& model, std::span<const Sample> batch, const TaskWeights& weights,
                     const LayerGates& gates, std::span<const int> joint_hide = {});

enum class HeadRule {
  availability,  // joint head if both modalities present, else the matching single-modality head
  joint_only,    // always the joint head (single-task baselines)
};
std::string to_string(HeadRule r);
HeadRule parse_head_rule(const std::string& s);

struct Prediction {
  std::vector<double> logits;
  Task chosen = Task::joint;
};

Prediction predict(Model& model, const Sample& sample, std::span<const int> policy,
                   HeadRule rule = HeadRule::availability);

}  // namespace mmr
