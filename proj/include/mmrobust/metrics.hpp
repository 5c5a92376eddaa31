// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmrobust/data.hpp"
#include "mmrobust/model.hpp"
#include "mmrobust/multitask.hpp"
#include "mmrobust/tensor.hpp"

namespace mmr {

struct F1Scores {
  double micro = 0.0;
  double macro = 0.0;
  double weighted = 0.0;
  double samples = 0.0;
};

// Per-class or per-sample F1 with a zero denominator counts as 0.
F1Scores f1_suite(const BoolMatrix& pred, const BoolMatrix& truth);

// Mann-Whitney form; tied pairs count 1/2. Throws if only one class is present.
double auroc(std::span<const double> scores, std::span<const int> labels);

double accuracy(std::span<const int> pred, std::span<const int> truth);

// (full - missing) / full * 100, rounded to one decimal.
double degradation_delta(double full_score, double missing_score);

struct EvalReport {
  std::map<std::string, double> metrics;
  std::map<std::string, double> delta;  // filled only when an eta = 1 report exists
  double eta = 1.0;
  std::uint64_t seed = 0;
  std::vector<int> policy;
  HeadRule rule = HeadRule::availability;
  std::size_t n_samples = 0;
};

struct EvalOptions {
  std::vector<double> etas{1.0, 0.7, 0.5, 0.3, 0.1, 0.0};
  int target_modality = 1;
  std::uint64_t seed = 0;
  double threshold = 0.5;  // sigmoid threshold for binary and multilabel predictions
  HeadRule rule = HeadRule::availability;
  bool all_metrics = false;  // false: report only the headline metric
};

// Headline metric per task type: accuracy, f1_macro or auroc.
std::string primary_metric(TaskType t);

EvalReport evaluate_once(Model& model, std::span<const int> policy, std::span<const Sample> test,
                         const EvalOptions& opts, double eta);
std::vector<EvalReport> evaluate(Model& model, std::span<const int> policy, std::span<const Sample> test,
                                 const EvalOptions& opts);

inline constexpr int kResultsSchemaVersion = 1;

// "# results-schema: 1" then dataset,seed,policy,eta,metric,value,delta.
// The policy column is the fusion vector as a 0/1 string; delta is empty
// when no full-set reference exists.
void write_results_header(std::ostream& os);
void write_results_rows(std::ostream& os, const std::string& dataset, std::span<const EvalReport> reports);

std::string policy_string(std::span<const int> s);
std::string format_number(double v);

}  // namespace mmr
