// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmrobust/data.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace mmr {

std::string to_string(TaskType t) {
  switch (t) {
    case TaskType::multilabel: return "multilabel";
    case TaskType::multiclass: return "multiclass";
    case TaskType::binary: return "binary";
  }
  return "?";
}

TaskType parse_task_type(std::string_view s) {
  if (s == "multilabel") return TaskType::multilabel;
  if (s == "multiclass") return TaskType::multiclass;
  if (s == "binary") return TaskType::binary;
  throw std::invalid_argument("unknown task type '" + std::string(s) + "'");
}

std::size_t output_width(TaskType t, std::size_t n_classes) { return t == TaskType::binary ? 1 : n_classes; }

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("synthetic spec: " + msg); };
  if (n_classes < 2) fail("n_classes must be >= 2");
  if (task_type == TaskType::binary && n_classes != 2) fail("binary task needs n_classes = 2");
  if (n_samples < 3) fail("n_samples must be >= 3");
  if (len1 == 0 || len2 == 0) fail("modality lengths must be positive");
  if (vocab1 <= n_classes || vocab2 <= n_classes) fail("vocabularies must exceed n_classes (pattern ids are reserved)");
  if (task_type == TaskType::multilabel && (len1 < n_classes || len2 < n_classes)) {
    fail("multilabel needs one token slot per class in each modality");
  }
  if (!(dominance >= 0.0 && dominance <= 1.0)) fail("dominance must lie in [0, 1]");
  if (!(label_noise >= 0.0 && label_noise < 1.0)) fail("label_noise must lie in [0, 1)");
  if (!(train_fraction > 0.0 && val_fraction > 0.0 && train_fraction + val_fraction < 1.0)) {
    fail("split fractions must be positive and leave room for a test split");
  }
}

SyntheticSpec preset_spec(std::string_view name) {
  SyntheticSpec s;
  if (name == "dominant") {
    s.n_classes = 4;
    s.task_type = TaskType::multiclass;
    s.n_samples = 5000;
    s.dominance = 0.9;
  } else if (name == "balanced-xor") {
    s.n_classes = 2;
    s.task_type = TaskType::binary;
    s.n_samples = 5000;
    s.xor_mode = true;
    s.dominance = 0.5;
  } else if (name == "tiny") {
    s.n_classes = 2;
    s.task_type = TaskType::multiclass;
    s.n_samples = 120;
    s.len1 = 3;
    s.len2 = 3;
    s.vocab1 = 12;
    s.vocab2 = 12;
    s.dominance = 0.9;
  } else {
    throw std::invalid_argument("unknown preset '" + std::string(name) + "'");
  }
  return s;
}

namespace {

using Rng = std::mt19937_64;

int uniform_int(Rng& rng, std::size_t lo, std::size_t hi_exclusive) {
  return static_cast<int>(std::uniform_int_distribution<std::size_t>(lo, hi_exclusive - 1)(rng));
}

bool bernoulli(Rng& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

// Background tokens are drawn from ids >= n_classes; ids below are patterns.
std::vector<int> background(Rng& rng, std::size_t len, std::size_t vocab, std::size_t n_classes) {
  std::vector<int> t(len);
  for (auto& v : t) v = uniform_int(rng, n_classes, vocab);
  return t;
}

void plant(Rng& rng, std::vector<int>& tokens, int pattern) {
  tokens[static_cast<std::size_t>(uniform_int(rng, 0, tokens.size()))] = pattern;
}

// Plants one pattern token per active class in distinct slots.
void plant_set(Rng& rng, std::vector<int>& tokens, const std::vector<std::uint8_t>& bits) {
  std::vector<std::size_t> slots(tokens.size());
  std::iota(slots.begin(), slots.end(), 0);
  std::shuffle(slots.begin(), slots.end(), rng);
  std::size_t k = 0;
  for (std::size_t c = 0; c < bits.size(); ++c) {
    if (bits[c]) tokens[slots[k++]] = static_cast<int>(c);
  }
}

Sample make_single_label(Rng& rng, const SyntheticSpec& s) {
  const std::size_t C = s.n_classes;
  Sample x;
  x.tokens1 = background(rng, s.len1, s.vocab1, C);
  x.tokens2 = background(rng, s.len2, s.vocab2, C);
  int y;
  if (s.xor_mode) {
    const int a = uniform_int(rng, 0, C);
    const int b = uniform_int(rng, 0, C);
    y = (a + b) % static_cast<int>(C);
    plant(rng, x.tokens1, a);
    plant(rng, x.tokens2, b);
  } else {
    y = uniform_int(rng, 0, C);
    const int p1 = bernoulli(rng, s.dominance) ? y : uniform_int(rng, 0, C);
    const int p2 = bernoulli(rng, 1.0 - s.dominance) ? y : uniform_int(rng, 0, C);
    plant(rng, x.tokens1, p1);
    plant(rng, x.tokens2, p2);
  }
  if (bernoulli(rng, s.label_noise)) y = uniform_int(rng, 0, C);
  x.label.index = y;
  return x;
}

Sample make_multilabel(Rng& rng, const SyntheticSpec& s) {
  const std::size_t C = s.n_classes;
  Sample x;
  x.tokens1 = background(rng, s.len1, s.vocab1, C);
  x.tokens2 = background(rng, s.len2, s.vocab2, C);
  std::vector<std::uint8_t> y(C), r1(C), r2(C);
  for (std::size_t c = 0; c < C; ++c) {
    if (s.xor_mode) {
      r1[c] = bernoulli(rng, 0.5);
      r2[c] = bernoulli(rng, 0.5);
      y[c] = r1[c] ^ r2[c];
    } else {
      y[c] = bernoulli(rng, 0.3);
      r1[c] = bernoulli(rng, s.dominance) ? y[c] : bernoulli(rng, 0.3);
      r2[c] = bernoulli(rng, 1.0 - s.dominance) ? y[c] : bernoulli(rng, 0.3);
    }
    if (bernoulli(rng, s.label_noise)) y[c] = bernoulli(rng, 0.5);
  }
  plant_set(rng, x.tokens1, r1);
  plant_set(rng, x.tokens2, r2);
  x.label.bits = std::move(y);
  return x;
}

std::size_t stratum(const Sample& x) {
  if (x.label.bits.empty()) return static_cast<std::size_t>(x.label.index);
  for (std::size_t c = 0; c < x.label.bits.size(); ++c) {
    if (x.label.bits[c]) return c;
  }
  return x.label.bits.size();
}

}  // namespace

Dataset generate(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::vector<Sample> all;
  all.reserve(spec.n_samples);
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    all.push_back(spec.task_type == TaskType::multilabel ? make_multilabel(rng, spec) : make_single_label(rng, spec));
  }

  // Stratified split keeps per-split class frequencies close to the global
  // distribution.
  std::map<std::size_t, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < all.size(); ++i) strata[stratum(all[i])].push_back(i);
  std::vector<std::size_t> tr, va, te;
  for (auto& [key, idx] : strata) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = static_cast<double>(idx.size());
    const auto n_tr = static_cast<std::size_t>(std::llround(spec.train_fraction * n));
    const auto n_va = std::min(idx.size() - n_tr, static_cast<std::size_t>(std::llround(spec.val_fraction * n)));
    tr.insert(tr.end(), idx.begin(), idx.begin() + static_cast<long>(n_tr));
    va.insert(va.end(), idx.begin() + static_cast<long>(n_tr), idx.begin() + static_cast<long>(n_tr + n_va));
    te.insert(te.end(), idx.begin() + static_cast<long>(n_tr + n_va), idx.end());
  }
  Dataset d;
  for (auto* part : {&tr, &va, &te}) std::shuffle(part->begin(), part->end(), rng);
  for (auto i : tr) d.train.push_back(all[i]);
  for (auto i : va) d.val.push_back(all[i]);
  for (auto i : te) d.test.push_back(all[i]);
  if (d.train.empty() || d.val.empty() || d.test.empty()) {
    throw std::invalid_argument("synthetic spec: too few samples for a train/val/test split");
  }
  return d;
}

std::size_t retained_count(double eta, std::size_t n) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("eta must lie in [0, 1]");
  return static_cast<std::size_t>(std::round(eta * static_cast<double>(n)));
}

std::vector<Sample> apply_missingness(std::span<const Sample> samples, const MissingnessSpec& m) {
  if (m.target_modality != 1 && m.target_modality != 2) throw std::invalid_argument("target_modality must be 1 or 2");
  const std::size_t keep = retained_count(m.eta, samples.size());
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(m.seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Sample> out(samples.begin(), samples.end());
  for (std::size_t k = keep; k < order.size(); ++k) {
    Sample& x = out[order[k]];
    if (m.target_modality == 1) {
      x.present1 = false;
      x.tokens1.clear();
    } else {
      x.present2 = false;
      x.tokens2.clear();
    }
    if (!x.present1 && !x.present2) {
      throw std::invalid_argument("apply_missingness: sample " + std::to_string(order[k]) +
                                  " would have no modality left");
    }
  }
  return out;
}

// ---- text serialization ---------------------------------------------------

namespace {

void write_tokens(std::ostream& os, const std::vector<int>& t) {
  for (std::size_t i = 0; i < t.size(); ++i) os << (i ? " " : "") << t[i];
}

std::vector<int> parse_tokens(const std::string& field) {
  std::vector<int> out;
  std::istringstream is(field);
  int v;
  while (is >> v) out.push_back(v);
  if (!is.eof()) throw std::invalid_argument("dataset: bad token list '" + field + "'");
  return out;
}

}  // namespace

void write_samples(std::ostream& os, std::span<const Sample> samples, TaskType task, std::size_t n_classes) {
  os << "# mmrobust-dataset v1 task=" << to_string(task) << " classes=" << n_classes << '\n';
  for (const Sample& x : samples) {
    if (task == TaskType::multilabel) {
      for (auto b : x.label.bits) os << (b ? '1' : '0');
    } else {
      os << x.label.index;
    }
    os << ';';
    write_tokens(os, x.tokens1);
    os << ';';
    write_tokens(os, x.tokens2);
    os << ';' << (x.present1 ? '1' : '0') << (x.present2 ? '1' : '0') << '\n';
  }
}

std::vector<Sample> read_samples(std::istream& is, TaskType* task_out, std::size_t* classes_out) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("# mmrobust-dataset v1", 0) != 0) {
    throw std::invalid_argument("dataset: missing header");
  }
  TaskType task = TaskType::multiclass;
  std::size_t classes = 0;
  {
    std::istringstream hs(line.substr(std::string("# mmrobust-dataset v1").size()));
    std::string kv;
    while (hs >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
      if (key == "task") task = parse_task_type(val);
      if (key == "classes") classes = std::stoul(val);
    }
  }
  std::vector<Sample> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(';', start)) != std::string::npos; start = pos + 1) {
      f.push_back(line.substr(start, pos - start));
    }
    f.push_back(line.substr(start));
    if (f.size() != 4 || f[3].size() != 2) {
      throw std::invalid_argument("dataset: malformed record on line " + std::to_string(lineno));
    }
    Sample x;
    if (task == TaskType::multilabel) {
      for (char ch : f[0]) x.label.bits.push_back(ch == '1' ? 1 : 0);
    } else {
      x.label.index = std::stoi(f[0]);
    }
    x.tokens1 = parse_tokens(f[1]);
    x.tokens2 = parse_tokens(f[2]);
    x.present1 = f[3][0] == '1';
    x.present2 = f[3][1] == '1';
    out.push_back(std::move(x));
  }
  if (task_out) *task_out = task;
  if (classes_out) *classes_out = classes;
  return out;
}

}  // namespace mmr
