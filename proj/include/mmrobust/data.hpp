// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

// Two-modality samples, a seeded synthetic generator with controllable
// modality dominance, and sample-level test-time missingness.

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mmr {

enum class TaskType { multilabel, multiclass, binary };

std::string to_string(TaskType t);
TaskType parse_task_type(std::string_view s);
// Number of logits a head emits: 1 for binary, n_classes otherwise.
std::size_t output_width(TaskType t, std::size_t n_classes);

struct Label {
  int index = 0;                    // multiclass / binary
  std::vector<std::uint8_t> bits;   // multilabel, one entry per class
  friend bool operator==(const Label&, const Label&) = default;
};

struct Sample {
  std::vector<int> tokens1;
  std::vector<int> tokens2;
  Label label;
  bool present1 = true;
  bool present2 = true;

  bool present(int modality) const { return modality == 1 ? present1 : present2; }
  bool complete() const { return present1 && present2; }
  friend bool operator==(const Sample&, const Sample&) = default;
};

struct SyntheticSpec {
  std::size_t n_classes = 4;
  TaskType task_type = TaskType::multiclass;
  std::size_t n_samples = 5000;
  std::size_t len1 = 6;
  std::size_t len2 = 6;
  std::size_t vocab1 = 32;
  std::size_t vocab2 = 32;
  // Probability that modality 1 carries the true label pattern; modality 2
  // carries it with probability 1 - dominance.
  double dominance = 0.9;
  // Label is a modular combination of one pattern per modality, so neither
  // modality alone is informative. Overrides dominance.
  bool xor_mode = false;
  double label_noise = 0.0;
  double train_fraction = 0.70;
  double val_fraction = 0.15;
  std::uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument
};

// Named presets: "dominant", "balanced-xor", "tiny".
SyntheticSpec preset_spec(std::string_view name);

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
};

Dataset generate(const SyntheticSpec& spec);

struct MissingnessSpec {
  double eta = 1.0;         // fraction of samples keeping the target modality
  int target_modality = 1;  // modality that goes missing
  std::uint64_t seed = 0;
};

// Keeps the target modality on exactly round(eta * N) samples chosen
// uniformly without replacement; the rest lose it entirely.
std::vector<Sample> apply_missingness(std::span<const Sample> samples, const MissingnessSpec& m);

// Nearest integer, halves away from zero.
std::size_t retained_count(double eta, std::size_t n);

// Line format, one sample per line:  label;tokens1;tokens2;flags
//   label  : class index, or a 0/1 string per class for multilabel
//   tokens : space separated ids, empty when the modality is absent
//   flags  : two characters, presence of modality 1 and 2 ("11", "10", "01")
// preceded by the header "# mmrobust-dataset v1 task=<type> classes=<n>".
void write_samples(std::ostream& os, std::span<const Sample> samples, TaskType task, std::size_t n_classes);
std::vector<Sample> read_samples(std::istream& is, TaskType* task = nullptr, std::size_t* n_classes = nullptr);

}  // namespace mmr
