// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

// Pre-LN transformer encoder with three classification tokens.
//
// Every forward pass runs two attention streams over the same weights:
//
//   fused stream     layer l uses compose(l, s): cross-modal block masks
//                    before the fusion layer, full attention from it on.
//                    Feeds the joint head from cls_joint.
//   unimodal stream  every layer uses the cross-modal block mask, so each
//                    modality is processed on its own. Feeds the m1 / m2
//                    heads from cls_m1 / cls_m2.
//
// Both streams are identical up to the first fused layer and share that
// prefix. The unimodal stream is what lets the single-modality heads stay
// blind to the other modality at every depth.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mmrobust/autodiff.hpp"
#include "mmrobust/data.hpp"
#include "mmrobust/encoder.hpp"
#include "mmrobust/masks.hpp"

namespace mmr {

struct ModelConfig {
  std::size_t layers = 4;
  std::size_t heads = 2;
  std::size_t d_model = 32;
  std::size_t d_ff = 64;
  std::size_t n_classes = 4;
  TaskType task_type = TaskType::multiclass;

  void validate() const;
  std::size_t output_width() const { return mmr::output_width(task_type, n_classes); }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

class Model {
 public:
  Model() = default;
  // Random initialisation; deterministic in `seed`.
  Model(const ModelConfig& cfg, const EncoderConfig& enc, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const EncoderConfig& encoder() const { return enc_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  // Used when restoring a checkpoint; validates names and shapes.
  void load_params(const ParameterSet& params);

 private:
  ModelConfig cfg_;
  EncoderConfig enc_;
  ParameterSet params_;
};

struct AttentionWeights {
  Var wq, bq, wk, bk, wv, bv, wo, bo;
};

// Scaled dot-product multi-head attention, scale 1/sqrt(d_model / heads).
Var mha_forward(Var seq, const AttentionMask& mask, const AttentionWeights& w, std::size_t heads);

// Fusion flags driving the fused stream. `soft`, when set, is a tape Var of
// length `layers` whose values equal `hard`; each fused-stream layer then
// mixes both attention variants as soft[l] * full + (1 - soft[l]) * block so
// the loss is differentiable in the policy.
struct LayerGates {
  std::vector<int> hard;
  Var soft;
};

struct ForwardOptions {
  bool joint = true;     // compute logits_joint
  bool unimodal = true;  // compute logits_m1 and logits_m2
};

struct ForwardResult {
  Var logits_joint;
  Var logits_m1;
  Var logits_m2;
  SequenceLayout layout;
};

ForwardResult model_forward(Tape& tape, Model& model, const Sample& sample, const LayerGates& gates,
                            const ForwardOptions& opts = {});

}  // namespace mmr
