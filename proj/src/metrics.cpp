// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmrobust/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace mmr {

namespace {

double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

double sigmoid_value(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace

F1Scores f1_suite(const BoolMatrix& pred, const BoolMatrix& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw DimensionError("f1_suite: prediction " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                         " vs truth " + std::to_string(truth.rows()) + "x" + std::to_string(truth.cols()));
  }
  if (pred.cols() == 0) throw DimensionError("f1_suite: need at least one class");
  const std::size_t n = pred.rows(), c = pred.cols();
  std::vector<std::size_t> tp(c, 0), fp(c, 0), fn(c, 0);
  double samples_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t stp = 0, sfp = 0, sfn = 0;
    for (std::size_t j = 0; j < c; ++j) {
      const bool p = pred(i, j), t = truth(i, j);
      if (p && t) ++tp[j], ++stp;
      if (p && !t) ++fp[j], ++sfp;
      if (!p && t) ++fn[j], ++sfn;
    }
    samples_sum += f1_from_counts(stp, sfp, sfn);
  }

  F1Scores out;
  const std::size_t TP = std::accumulate(tp.begin(), tp.end(), std::size_t{0});
  const std::size_t FP = std::accumulate(fp.begin(), fp.end(), std::size_t{0});
  const std::size_t FN = std::accumulate(fn.begin(), fn.end(), std::size_t{0});
  out.micro = f1_from_counts(TP, FP, FN);
  double macro = 0.0, weighted = 0.0;
  std::size_t support = 0;
  for (std::size_t j = 0; j < c; ++j) {
    const double f = f1_from_counts(tp[j], fp[j], fn[j]);
    macro += f;
    weighted += f * static_cast<double>(tp[j] + fn[j]);
    support += tp[j] + fn[j];
  }
  out.macro = macro / static_cast<double>(c);
  out.weighted = support == 0 ? 0.0 : weighted / static_cast<double>(support);
  out.samples = n == 0 ? 0.0 : samples_sum / static_cast<double>(n);
  return out;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("auroc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the Mann-Whitney U, kept integral so the result is exact.
  std::uint64_t twice_u = 0, negatives_below = 0, n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      const int l = labels[order[j]];
      if (l != 0 && l != 1) throw std::invalid_argument("auroc: labels must be 0 or 1");
      l ? ++pos : ++neg;
      ++j;
    }
    twice_u += pos * (2 * negatives_below + neg);
    negatives_below += neg;
    n_pos += pos;
    n_neg += neg;
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auroc: both classes must be present");
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double accuracy(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) throw DimensionError("accuracy: length mismatch");
  if (pred.empty()) throw std::invalid_argument("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double degradation_delta(double full_score, double missing_score) {
  if (!(full_score > 0.0)) throw std::invalid_argument("degradation_delta: full score must be positive");
  const double pct = (full_score - missing_score) / full_score * 100.0;
  return std::round(pct * 10.0) / 10.0;
}

std::string primary_metric(TaskType t) {
  switch (t) {
    case TaskType::multiclass: return "accuracy";
    case TaskType::multilabel: return "f1_macro";
    case TaskType::binary: return "auroc";
  }
  return "accuracy";
}

EvalReport evaluate_once(Model& model, std::span<const int> policy, std::span<const Sample> test,
                         const EvalOptions& opts, double eta) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
  const std::vector<Sample> shifted = apply_missingness(test, {eta, opts.target_modality, opts.seed});
  const ModelConfig& mc = model.config();
  const std::size_t width = mc.output_width();
  const std::size_t n = shifted.size();

  EvalReport rep;
  rep.eta = eta;
  rep.seed = opts.seed;
  rep.policy.assign(policy.begin(), policy.end());
  rep.rule = opts.rule;
  rep.n_samples = n;

  std::vector<std::vector<double>> logits(n);
  for (std::size_t i = 0; i < n; ++i) logits[i] = predict(model, shifted[i], policy, opts.rule).logits;

  switch (mc.task_type) {
    case TaskType::multiclass: {
      std::vector<int> pred(n), truth(n);
      BoolMatrix pb(n, width), tb(n, width);
      for (std::size_t i = 0; i < n; ++i) {
        pred[i] = static_cast<int>(std::max_element(logits[i].begin(), logits[i].end()) - logits[i].begin());
        truth[i] = shifted[i].label.index;
        pb.set(i, static_cast<std::size_t>(pred[i]), true);
        tb.set(i, static_cast<std::size_t>(truth[i]), true);
      }
      const F1Scores f = f1_suite(pb, tb);
      rep.metrics["accuracy"] = accuracy(pred, truth);
      rep.metrics["f1_macro"] = f.macro;
      rep.metrics["f1_micro"] = f.micro;
      break;
    }
    case TaskType::binary: {
      std::vector<double> scores(n);
      std::vector<int> pred(n), truth(n);
      for (std::size_t i = 0; i < n; ++i) {
        scores[i] = logits[i][0];
        pred[i] = sigmoid_value(logits[i][0]) >= opts.threshold ? 1 : 0;
        truth[i] = shifted[i].label.index;
      }
      const bool both = std::count(truth.begin(), truth.end(), 1) > 0 && std::count(truth.begin(), truth.end(), 0) > 0;
      if (both) rep.metrics["auroc"] = auroc(scores, truth);
      rep.metrics["accuracy"] = accuracy(pred, truth);
      break;
    }
    case TaskType::multilabel: {
      BoolMatrix pb(n, width), tb(n, width);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < width; ++j) {
          pb.set(i, j, sigmoid_value(logits[i][j]) >= opts.threshold);
          tb.set(i, j, shifted[i].label.bits.at(j) != 0);
        }
      }
      const F1Scores f = f1_suite(pb, tb);
      rep.metrics["f1_micro"] = f.micro;
      rep.metrics["f1_macro"] = f.macro;
      rep.metrics["f1_weighted"] = f.weighted;
      rep.metrics["f1_samples"] = f.samples;
      break;
    }
  }
  if (!opts.all_metrics) {
    const std::string keep = primary_metric(mc.task_type);
    std::erase_if(rep.metrics, [&](const auto& kv) { return kv.first != keep; });
  }
  return rep;
}

std::vector<EvalReport> evaluate(Model& model, std::span<const int> policy, std::span<const Sample> test,
                                 const EvalOptions& opts) {
  if (opts.etas.empty()) throw std::invalid_argument("evaluate: empty eta grid");
  std::vector<EvalReport> reports;
  for (double eta : opts.etas) reports.push_back(evaluate_once(model, policy, test, opts, eta));
  const auto full = std::find_if(reports.begin(), reports.end(), [](const EvalReport& r) { return r.eta == 1.0; });
  if (full != reports.end()) {
    const EvalReport ref = *full;
    for (auto& r : reports) {
      for (const auto& [name, value] : r.metrics) {
        const auto it = ref.metrics.find(name);
        if (it != ref.metrics.end() && it->second > 0.0) r.delta[name] = degradation_delta(it->second, value);
      }
    }
  }
  return reports;
}

std::string policy_string(std::span<const int> s) {
  std::string out;
  for (int v : s) out.push_back(v ? '1' : '0');
  return out;
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_results_header(std::ostream& os) {
  os << "# results-schema: " << kResultsSchemaVersion << "\n";
  os << "dataset,seed,policy,eta,metric,value,delta\n";
}

void write_results_rows(std::ostream& os, const std::string& dataset, std::span<const EvalReport> reports) {
  for (const auto& r : reports) {
    for (const auto& [name, value] : r.metrics) {
      os << dataset << ',' << r.seed << ',' << policy_string(r.policy) << ',' << format_number(r.eta) << ',' << name
         << ',' << format_number(value) << ',';
      const auto d = r.delta.find(name);
      if (d != r.delta.end()) os << format_number(d->second);
      os << '\n';
    }
  }
}

}  // namespace mmr
