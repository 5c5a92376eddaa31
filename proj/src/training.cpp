// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmrobust/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>

#include "mmrobust/policy.hpp"

namespace mmr {

TrainResult train_fixed(Model& model, std::span<const Sample> train, std::span<const int> policy,
                        const TaskWeights& weights, const TrainConfig& cfg) {
  if (train.empty()) throw std::invalid_argument("train_fixed: empty training set");
  if (cfg.batch_size == 0) throw std::invalid_argument("train_fixed: batch_size must be positive");
  if (!is_suffix_ones(policy)) throw std::invalid_argument("train_fixed: policy is not a valid fusion vector");
  if (policy.size() != model.config().layers) throw std::invalid_argument("train_fixed: policy length != depth");
  if (!(cfg.modality_dropout >= 0.0 && cfg.modality_dropout <= 1.0)) {
    throw std::invalid_argument("train_fixed: modality_dropout must lie in [0, 1]");
  }
  if (cfg.dropout_modality < 0 || cfg.dropout_modality > 2) {
    throw std::invalid_argument("train_fixed: dropout_modality must be 0, 1 or 2");
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const LayerGates gates{std::vector<int>(policy.begin(), policy.end()), {}};
  AdamState state;
  TrainResult result;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Sample> batch;
  std::vector<int> hide;
  std::size_t step = 0;
  // Parameters at the most recent step whose loss was finite.
  ParameterSet last_good = model.params();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      hide.clear();
      for (std::size_t k = start; k < end; ++k) {
        batch.push_back(train[order[k]]);
        int h = 0;
        if (cfg.modality_dropout > 0.0 && unit(rng) < cfg.modality_dropout) {
          h = cfg.dropout_modality != 0 ? cfg.dropout_modality : (unit(rng) < 0.5 ? 1 : 2);
        }
        hide.push_back(h);
      }

      model.params().zero_grad();
      Tape tape;
      BatchLoss loss = total_loss(tape, model, batch, weights, gates, hide);
      if (!std::isfinite(loss.report.total)) {
        model.load_params(last_good);
        throw TrainingDiverged("non-finite training loss at step " + std::to_string(step), step);
      }
      last_good = model.params();
      tape.backward(loss.total);
      try {
        adam_step(model.params(), state, cfg.adam);
      } catch (const NonFiniteGradientError& e) {
        model.load_params(last_good);
        throw TrainingDiverged(e.what(), step);
      }
      result.log.push_back({step, loss.report});
      ++step;
    }
  }
  return result;
}

Model retrain_fixed(std::span<const int> policy, std::span<const Sample> full_train, const ModelConfig& model_cfg,
                    const EncoderConfig& enc_cfg, std::uint64_t init_seed, const TaskWeights& weights,
                    const TrainConfig& cfg, TrainResult* log) {
  Model model(model_cfg, enc_cfg, init_seed);
  TrainResult r = train_fixed(model, full_train, policy, weights, cfg);
  if (log) *log = std::move(r);
  return model;
}

void write_loss_log(std::ostream& os, std::span<const LossLogRow> rows) {
  os << "step,loss_m1,loss_m2,loss_joint,total\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", r.step, r.report.loss_m1, r.report.loss_m2,
                  r.report.loss_joint, r.report.total);
    os << buf;
  }
}

}  // namespace mmr
