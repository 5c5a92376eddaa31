// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <random>

#include "mmrobust/autodiff.hpp"
#include "mmrobust/data.hpp"

namespace mmr {

struct EncoderConfig {
  std::size_t d_model = 32;
  std::size_t vocab1 = 32;
  std::size_t vocab2 = 32;
  std::size_t max_len1 = 6;
  std::size_t max_len2 = 6;

  void validate(std::size_t heads) const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool empty() const { return begin == end; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

enum class Role { cls_joint, cls_m1, cls_m2, modality1, modality2 };

// Sequence order: [cls_joint, cls_m1, cls_m2, modality-1 tokens, modality-2 tokens].
// An absent modality contributes no positions.
struct SequenceLayout {
  std::size_t cls_joint_idx = 0;
  std::size_t cls_m1_idx = 1;
  std::size_t cls_m2_idx = 2;
  IndexRange m1_range;
  IndexRange m2_range;
  bool present1 = false;
  bool present2 = false;

  static SequenceLayout for_lengths(std::size_t n1, std::size_t n2);
  std::size_t size() const { return 3 + m1_range.size() + m2_range.size(); }
  Role role(std::size_t i) const;
  friend bool operator==(const SequenceLayout&, const SequenceLayout&) = default;
};

SequenceLayout layout_of(const Sample& sample);

// Parameter names owned by the encoder.
namespace embed_names {
inline constexpr const char* tok1 = "embed.tok1";
inline constexpr const char* tok2 = "embed.tok2";
inline constexpr const char* pos1 = "embed.pos1";
inline constexpr const char* pos2 = "embed.pos2";
inline constexpr const char* type = "embed.type";  // row 0: modality 1, row 1: modality 2
inline constexpr const char* cls = "embed.cls";    // rows: joint, m1, m2
}  // namespace embed_names

void init_embedding_params(ParameterSet& params, const EncoderConfig& cfg, std::mt19937_64& rng, double stddev);

struct EmbeddedSequence {
  Var sequence;  // [S x d_model]
  SequenceLayout layout;
};

// Token embedding = token lookup + position lookup + modality-type lookup.
// Class tokens are the raw learned vectors.
EmbeddedSequence embed_sample(Tape& tape, const Sample& sample, const EncoderConfig& cfg, ParameterSet& params);

}  // namespace mmr
