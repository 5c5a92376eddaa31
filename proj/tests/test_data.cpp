// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "mmrobust/data.hpp"

using namespace mmr;

namespace {

std::string serialize(const std::vector<Sample>& v, TaskType t, std::size_t c) {
  std::ostringstream os;
  write_samples(os, v, t, c);
  return os.str();
}

std::vector<double> class_freq(const std::vector<Sample>& v, std::size_t c) {
  std::vector<double> f(c, 0.0);
  for (const auto& s : v) f[static_cast<std::size_t>(s.label.index)] += 1.0;
  for (auto& x : f) x /= static_cast<double>(v.size());
  return f;
}

// Multinomial logistic regression on bag-of-token counts of one modality,
// full-batch gradient descent. Returns held-out accuracy.
double logistic_probe(const std::vector<Sample>& train, const std::vector<Sample>& test, int modality,
                      std::size_t vocab, std::size_t classes) {
  auto features = [&](const Sample& s) {
    std::vector<double> x(vocab + 1, 0.0);
    for (int t : modality == 1 ? s.tokens1 : s.tokens2) x[static_cast<std::size_t>(t)] += 1.0;
    x[vocab] = 1.0;
    return x;
  };
  std::vector<std::vector<double>> w(classes, std::vector<double>(vocab + 1, 0.0));
  auto scores = [&](const std::vector<double>& x) {
    std::vector<double> z(classes, 0.0);
    for (std::size_t c = 0; c < classes; ++c)
      for (std::size_t j = 0; j <= vocab; ++j) z[c] += w[c][j] * x[j];
    return z;
  };
  std::vector<std::vector<double>> xs;
  for (const auto& s : train) xs.push_back(features(s));
  for (int it = 0; it < 200; ++it) {
    std::vector<std::vector<double>> g(classes, std::vector<double>(vocab + 1, 0.0));
    for (std::size_t i = 0; i < train.size(); ++i) {
      auto z = scores(xs[i]);
      const double mx = *std::max_element(z.begin(), z.end());
      double tot = 0.0;
      for (auto& v : z) tot += (v = std::exp(v - mx));
      for (std::size_t c = 0; c < classes; ++c) {
        const double d = z[c] / tot - (static_cast<int>(c) == train[i].label.index ? 1.0 : 0.0);
        for (std::size_t j = 0; j <= vocab; ++j) g[c][j] += d * xs[i][j];
      }
    }
    for (std::size_t c = 0; c < classes; ++c)
      for (std::size_t j = 0; j <= vocab; ++j) w[c][j] -= 0.5 * g[c][j] / static_cast<double>(train.size());
  }
  std::size_t hits = 0;
  for (const auto& s : test) {
    const auto z = scores(features(s));
    hits += static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin()) == s.label.index;
  }
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

}  // namespace

TEST_CASE("generation is deterministic in the seed", "[data]") {
  SyntheticSpec s = preset_spec("dominant");
  s.n_samples = 400;
  s.seed = 12;
  const Dataset a = generate(s), b = generate(s);
  CHECK(serialize(a.train, s.task_type, s.n_classes) == serialize(b.train, s.task_type, s.n_classes));
  CHECK(serialize(a.test, s.task_type, s.n_classes) == serialize(b.test, s.task_type, s.n_classes));
  s.seed = 13;
  CHECK_FALSE(generate(s).train == a.train);
}

TEST_CASE("splits follow the configured fractions and keep class balance", "[data][property]") {
  for (const char* preset : {"dominant", "balanced-xor"}) {
    SyntheticSpec s = preset_spec(preset);
    s.n_samples = 4000;
    s.seed = 5;
    const Dataset d = generate(s);
    CHECK(d.train.size() + d.val.size() + d.test.size() == 4000);
    CHECK(std::abs(static_cast<double>(d.train.size()) - 2800.0) <= static_cast<double>(s.n_classes));
    CHECK(std::abs(static_cast<double>(d.val.size()) - 600.0) <= static_cast<double>(s.n_classes));

    std::vector<Sample> all = d.train;
    all.insert(all.end(), d.val.begin(), d.val.end());
    all.insert(all.end(), d.test.begin(), d.test.end());
    const auto global = class_freq(all, s.n_classes);
    for (const auto* part : {&d.train, &d.val, &d.test}) {
      const auto f = class_freq(*part, s.n_classes);
      for (std::size_t c = 0; c < s.n_classes; ++c) CHECK(std::abs(f[c] - global[c]) <= 0.05);
    }
  }
}

TEST_CASE("tokens stay inside their vocabularies", "[data][property]") {
  SyntheticSpec s = preset_spec("dominant");
  s.n_samples = 500;
  s.task_type = TaskType::multilabel;
  const Dataset d = generate(s);
  for (const auto& x : d.train) {
    CHECK(x.tokens1.size() == s.len1);
    CHECK(x.tokens2.size() == s.len2);
    for (int t : x.tokens1) CHECK((t >= 0 && static_cast<std::size_t>(t) < s.vocab1));
    for (int t : x.tokens2) CHECK((t >= 0 && static_cast<std::size_t>(t) < s.vocab2));
    CHECK(x.label.bits.size() == s.n_classes);
  }
}

TEST_CASE("full dominance makes the modality-1 pattern a perfect lookup", "[data]") {
  SyntheticSpec s = preset_spec("dominant");
  s.dominance = 1.0;
  s.label_noise = 0.0;
  s.n_samples = 2000;
  const Dataset d = generate(s);
  std::size_t hits = 0;
  for (const auto& x : d.test) {
    const int pattern = *std::min_element(x.tokens1.begin(), x.tokens1.end());
    hits += pattern == x.label.index;
  }
  CHECK(hits == d.test.size());
}

TEST_CASE("xor labels are invisible to either modality alone", "[data][probe]") {
  SyntheticSpec s = preset_spec("balanced-xor");
  s.n_samples = 10000;
  s.seed = 21;
  const Dataset d = generate(s);
  std::vector<Sample> test = d.val;
  test.insert(test.end(), d.test.begin(), d.test.end());
  const double chance = 1.0 / static_cast<double>(s.n_classes);
  for (int modality : {1, 2}) {
    const double acc = logistic_probe(d.train, test, modality, modality == 1 ? s.vocab1 : s.vocab2, s.n_classes);
    INFO("modality " << modality << " probe accuracy " << acc);
    CHECK(std::abs(acc - chance) <= 0.03);
  }
  // The same probe does see a dominant modality.
  SyntheticSpec dom = preset_spec("dominant");
  dom.n_samples = 3000;
  const Dataset dd = generate(dom);
  CHECK(logistic_probe(dd.train, dd.test, 1, dom.vocab1, dom.n_classes) > 0.8);
}

TEST_CASE("missingness keeps exactly round(eta * N) samples", "[data]") {
  SyntheticSpec s = preset_spec("tiny");
  const Dataset d = generate(s);
  const std::vector<Sample> ten(d.train.begin(), d.train.begin() + 10);
  auto kept = [](const std::vector<Sample>& v, int m) {
    return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [&](const Sample& x) { return x.present(m); }));
  };
  CHECK(kept(apply_missingness(ten, {0.3, 2, 1}), 2) == 3);
  CHECK(kept(apply_missingness(ten, {0.3, 2, 1}), 1) == 10);
  CHECK(kept(apply_missingness(ten, {0.25, 1, 1}), 1) == 3);  // 2.5 rounds away from zero
  CHECK(apply_missingness(ten, {1.0, 1, 4}) == ten);
  const auto none = apply_missingness(ten, {0.0, 1, 4});
  CHECK(kept(none, 1) == 0);
  for (const auto& x : none) CHECK(x.tokens1.empty());
  CHECK(retained_count(0.5, 7) == 4);
  CHECK_THROWS_AS(retained_count(1.5, 7), std::invalid_argument);
  CHECK_THROWS_AS(apply_missingness(none, {0.0, 2, 1}), std::invalid_argument);
}

TEST_CASE("missingness is idempotent and seeded", "[data][property]") {
  SyntheticSpec s = preset_spec("tiny");
  const Dataset d = generate(s);
  for (double eta : {0.0, 0.1, 0.5, 0.7, 1.0}) {
    const MissingnessSpec m{eta, 1, 17};
    const auto once = apply_missingness(d.train, m);
    CHECK(apply_missingness(once, m) == once);
    CHECK(apply_missingness(d.train, m) == once);
  }
  CHECK_FALSE(apply_missingness(d.train, {0.5, 1, 1}) == apply_missingness(d.train, {0.5, 1, 2}));
}

TEST_CASE("dataset text format round-trips", "[data]") {
  for (TaskType t : {TaskType::multiclass, TaskType::multilabel, TaskType::binary}) {
    SyntheticSpec s = preset_spec("tiny");
    s.task_type = t;
    if (t == TaskType::multilabel) s.n_classes = 3;
    const Dataset d = generate(s);
    const auto mixed = apply_missingness(d.test, {0.5, 2, 3});
    std::istringstream is(serialize(mixed, t, s.n_classes));
    TaskType back_t;
    std::size_t back_c = 0;
    CHECK(read_samples(is, &back_t, &back_c) == mixed);
    CHECK(back_t == t);
    CHECK(back_c == s.n_classes);
  }
  Sample x;
  x.tokens1 = {3, 4};
  x.present2 = false;
  x.label.index = 1;
  CHECK(serialize({x}, TaskType::multiclass, 2) == "# mmrobust-dataset v1 task=multiclass classes=2\n1;3 4;;10\n");
  std::istringstream bad("# mmrobust-dataset v1 task=multiclass classes=2\n1;3 x;;10\n");
  CHECK_THROWS_AS(read_samples(bad), std::invalid_argument);
}

TEST_CASE("spec validation", "[data]") {
  SyntheticSpec s;
  s.dominance = 1.5;
  CHECK_THROWS_AS(generate(s), std::invalid_argument);
  s = {};
  s.train_fraction = 0.9;
  s.val_fraction = 0.2;
  CHECK_THROWS_AS(generate(s), std::invalid_argument);
  CHECK_THROWS_AS(preset_spec("imdb"), std::invalid_argument);
}
