// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include "mmrobust/data.hpp"
#include "mmrobust/training.hpp"

using namespace mmr;

namespace {

struct Setup {
  ModelConfig mc;
  EncoderConfig ec;
  Dataset data;
};

Setup separable() {
  SyntheticSpec s = preset_spec("tiny");
  s.n_samples = 300;
  s.dominance = 1.0;
  s.label_noise = 0.0;
  s.seed = 2;
  Setup out;
  out.data = generate(s);
  out.mc.layers = 2;
  out.mc.heads = 2;
  out.mc.d_model = 8;
  out.mc.d_ff = 16;
  out.mc.n_classes = s.n_classes;
  out.ec.d_model = 8;
  out.ec.vocab1 = s.vocab1;
  out.ec.vocab2 = s.vocab2;
  out.ec.max_len1 = s.len1;
  out.ec.max_len2 = s.len2;
  return out;
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 16;
  tc.adam.lr = 1e-2;
  tc.adam.weight_decay = 0.0;
  tc.seed = 5;
  return tc;
}

}  // namespace

TEST_CASE("retraining twice with one seed gives identical parameters", "[training]") {
  const Setup s = separable();
  const std::vector<int> policy{0, 1};
  TrainResult la, lb;
  const Model a = retrain_fixed(policy, s.data.train, s.mc, s.ec, 9, {1, 1, 1}, quick(2), &la);
  const Model b = retrain_fixed(policy, s.data.train, s.mc, s.ec, 9, {1, 1, 1}, quick(2), &lb);
  CHECK(a.params() == b.params());
  std::ostringstream oa, ob;
  write_loss_log(oa, la.log);
  write_loss_log(ob, lb.log);
  CHECK(oa.str() == ob.str());
  const Model c = retrain_fixed(policy, s.data.train, s.mc, s.ec, 10, {1, 1, 1}, quick(2));
  CHECK_FALSE(a.params() == c.params());
}

TEST_CASE("full fusion fits a separable set", "[training]") {
  const Setup s = separable();
  const std::vector<int> policy{1, 1};
  Model m = retrain_fixed(policy, s.data.train, s.mc, s.ec, 4, {1, 1, 1}, quick(30));
  std::size_t hits = 0;
  for (const Sample& x : s.data.train) {
    const auto p = predict(m, x, policy);
    hits += static_cast<int>(std::max_element(p.logits.begin(), p.logits.end()) - p.logits.begin()) == x.label.index;
  }
  const double acc = static_cast<double>(hits) / static_cast<double>(s.data.train.size());
  INFO("train accuracy " << acc);
  CHECK(acc >= 0.95);
}

TEST_CASE("late-fusion retraining keeps the never-fused prefix block-structured", "[training][property]") {
  const Setup s = separable();
  const std::vector<int> policy{0, 1};
  Model m = retrain_fixed(policy, s.data.train, s.mc, s.ec, 4, {1, 1, 1}, quick(1));
  Sample a = s.data.test.front();
  Sample b = a;
  for (int& t : b.tokens2) t = (t + 1) % static_cast<int>(s.ec.vocab2);
  Tape ta, tb;
  CHECK(model_forward(ta, m, a, LayerGates{policy, {}}).logits_m1.value() ==
        model_forward(tb, m, b, LayerGates{policy, {}}).logits_m1.value());
}

TEST_CASE("loss log rows follow the CSV contract", "[training]") {
  const Setup s = separable();
  const std::vector<int> policy{0, 1};
  Model m(s.mc, s.ec, 1);
  const TrainResult r = train_fixed(m, s.data.train, policy, {1, 1, 1}, quick(1));
  const std::size_t batches = (s.data.train.size() + 15) / 16;
  REQUIRE(r.log.size() == batches);
  for (const auto& row : r.log) {
    const auto& rep = row.report;
    CHECK(rep.total == Catch::Approx(rep.loss_m1 + rep.loss_m2 + rep.loss_joint).epsilon(1e-12));
  }
  std::ostringstream os;
  write_loss_log(os, r.log);
  const std::string text = os.str();
  CHECK(text.rfind("step,loss_m1,loss_m2,loss_joint,total\n", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == batches + 1);
}

TEST_CASE("divergence restores the last good parameters", "[training]") {
  const Setup s = separable();
  const std::vector<int> policy{1, 1};
  Model m(s.mc, s.ec, 2);
  TrainConfig tc = quick(3);
  tc.adam.lr = 1e200;
  try {
    train_fixed(m, s.data.train, policy, {1, 1, 1}, tc);
    FAIL("expected TrainingDiverged");
  } catch (const TrainingDiverged& e) {
    CHECK(e.step() >= 1);
  }
  for (const auto& p : m.params().items())
    for (double v : p.value.values()) CHECK(std::isfinite(v));
}

TEST_CASE("modality dropout is seeded and changes training", "[training]") {
  const Setup s = separable();
  const std::vector<int> policy{0, 1};
  TrainConfig tc = quick(1);
  tc.modality_dropout = 0.5;
  Model a(s.mc, s.ec, 3), b(s.mc, s.ec, 3), plain(s.mc, s.ec, 3);
  const TrainResult ra = train_fixed(a, s.data.train, policy, {1, 1, 1}, tc);
  train_fixed(b, s.data.train, policy, {1, 1, 1}, tc);
  CHECK(a.params() == b.params());
  train_fixed(plain, s.data.train, policy, {1, 1, 1}, quick(1));
  CHECK_FALSE(a.params() == plain.params());
  // Hidden modalities only affect the joint forward pass; task counts follow
  // the samples' own availability.
  std::size_t joint = 0;
  for (const auto& row : ra.log) joint += row.report.n_joint;
  CHECK(joint == s.data.train.size());
  tc.dropout_modality = 3;
  CHECK_THROWS_AS(train_fixed(a, s.data.train, policy, {1, 1, 1}, tc), std::invalid_argument);
}
