// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "mmrobust/data.hpp"
#include "mmrobust/model.hpp"
#include "mmrobust/multitask.hpp"
#include "mmrobust/optim.hpp"

namespace mmr {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  AdamConfig adam;
  std::uint64_t seed = 0;
  // Probability that a training sample has one modality hidden from the
  // joint task.
  double modality_dropout = 0.0;
  // Which modality is hidden: 1, 2, or 0 for a fair coin per sample.
  int dropout_modality = 0;
};

struct LossLogRow {
  std::size_t step = 0;
  LossReport report;
};

struct TrainResult {
  std::vector<LossLogRow> log;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::size_t step) : std::runtime_error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

// Adam training with a fixed fusion policy. Deterministic in cfg.seed.
// On a non-finite loss or gradient the parameters are restored to the last
// good step before TrainingDiverged is thrown.
TrainResult train_fixed(Model& model, std::span<const Sample> train, std::span<const int> policy,
                        const TaskWeights& weights, const TrainConfig& cfg);

// Fresh initialisation from `init_seed`, then train_fixed on the full
// training set.
Model retrain_fixed(std::span<const int> policy, std::span<const Sample> full_train, const ModelConfig& model_cfg,
                    const EncoderConfig& enc_cfg, std::uint64_t init_seed, const TaskWeights& weights,
                    const TrainConfig& cfg, TrainResult* log = nullptr);

// CSV: step,loss_m1,loss_m2,loss_joint,total
void write_loss_log(std::ostream& os, std::span<const LossLogRow> rows);

}  // namespace mmr
