// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment configuration and the train / eval / sweep drivers behind the
// command-line tool.
//
// Config files are INI text: `[section]` headers, `key = value` lines, `;` or
// `#` comments. Unknown sections or keys are rejected. See README.md for the
// full key list.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmrobust/checkpoint.hpp"
#include "mmrobust/data.hpp"
#include "mmrobust/metrics.hpp"
#include "mmrobust/model.hpp"
#include "mmrobust/multitask.hpp"
#include "mmrobust/search.hpp"
#include "mmrobust/training.hpp"

namespace mmr {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Mode { baseline, multitask, multitask_search };
std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

struct ExperimentConfig {
  Mode mode = Mode::multitask;
  std::uint64_t seed = 0;
  std::string name;    // dataset label in result rows; defaults to the preset
  std::string preset;  // empty: data fields only

  SyntheticSpec data;
  ModelConfig model;
  EncoderConfig encoder;
  TaskWeights weights;
  TrainConfig training;
  std::size_t fusion_index = 0;  // fixed policy for baseline and multitask
  SearchConfig search;
  EvalOptions eval;

  // Copies seeds and data-derived sizes into the sub-configs and checks
  // consistency. Throws ConfigError naming the offending field.
  void resolve();
  std::vector<int> fixed_policy() const;

  // Flattened "section.key" -> value, the exact form written by to_ini.
  std::map<std::string, std::string> to_map() const;
};

ExperimentConfig parse_config(std::istream& is);
ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from_map(const std::map<std::string, std::string>& kv);
void write_config(std::ostream& os, const ExperimentConfig& cfg);

struct RunOutcome {
  Checkpoint checkpoint;
  std::vector<EvalReport> reports;
  TrainResult log;
  std::vector<PolicyHistoryRow> history;
};

// Trains per cfg.mode and evaluates on the test split. When out_dir is
// non-empty it receives config.ini, seed.txt, model.ckpt, train_log.csv,
// results.csv and, for search runs, search_history.csv.
RunOutcome run_train(const ExperimentConfig& cfg, const std::string& out_dir);

// Regenerates the test split recorded in the checkpoint and evaluates it.
std::vector<EvalReport> run_eval(const Checkpoint& ckpt, const std::optional<std::vector<double>>& etas);

struct SweepRow {
  std::string dataset;
  std::string mode;
  double eta = 0.0;
  std::string metric;
  std::size_t n = 0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

std::vector<SweepRow> aggregate(const std::string& dataset, Mode mode, const std::vector<EvalReport>& reports);

// One run_train per seed under out_dir/seed_<s>, then aggregate.csv and
// plot_data.csv in out_dir.
std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                const std::string& out_dir);

void write_aggregate(std::ostream& os, const std::vector<SweepRow>& rows);
void write_history(std::ostream& os, const std::vector<PolicyHistoryRow>& rows, std::size_t depth);
void print_summary(std::ostream& os, const std::vector<EvalReport>& reports, TaskType task);

std::vector<double> parse_number_list(const std::string& s);

}  // namespace mmr
