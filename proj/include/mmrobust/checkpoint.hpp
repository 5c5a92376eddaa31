// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

// Portable text checkpoint. Values are written as C99 hexadecimal floats so
// a save/load round trip is bit-exact.
//
//   mmrobust-checkpoint v1
//   model <layers> <heads> <d_model> <d_ff> <n_classes> <task_type>
//   encoder <d_model> <vocab1> <vocab2> <max_len1> <max_len2>
//   policy <s_1> ... <s_M>
//   fusion_index <first fused layer, 0-based>
//   alpha <a_1> ... <a_M>                  (hex floats; omitted when empty)
//   meta <key> <value...>                  (zero or more)
//   history <outer_step> <argmax> <val_loss> <soft_1> ... <soft_M>   (zero or more)
//   param <name> <rank> <dims...>
//   <values, hex floats separated by spaces>
//   ...
//   end

#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "mmrobust/model.hpp"
#include "mmrobust/policy.hpp"

namespace mmr {

struct Checkpoint {
  ModelConfig model;
  EncoderConfig encoder;
  ParameterSet params;
  std::vector<int> policy;
  std::vector<double> alpha;
  std::map<std::string, std::string> meta;
  std::vector<PolicyHistoryRow> history;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& is);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Rebuilds a Model from a checkpoint.
Model model_from_checkpoint(const Checkpoint& ckpt);

std::string hex_double(double v);
double parse_double(const std::string& token);

}  // namespace mmr
