// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

// Boolean attention masks over a SequenceLayout (row = query, column = key).
//
// Rules, for the positions that are present:
//   full            every position attends every position
//   cross-modal     modality tokens attend their own modality block and that
//   block           modality's class token; cls_m1 / cls_m2 attend themselves
//                   and their modality; cls_joint attends only itself
//   task (m1_only)  cls_m1 attends only itself and modality-1 tokens, and no
//                   other row may read the cls_m1 column (same for m2_only)
//
// compose() intersects the per-layer base (full at fused layers, cross-modal
// block otherwise) with both task restrictions.

#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmrobust/encoder.hpp"
#include "mmrobust/tensor.hpp"

namespace mmr {

class MaskError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct AttentionMask {
  BoolMatrix allowed;

  std::size_t size() const { return allowed.rows(); }
  bool operator()(std::size_t q, std::size_t k) const { return allowed(q, k); }
  bool symmetric() const;
  friend bool operator==(const AttentionMask&, const AttentionMask&) = default;
};

enum class SingleTask { m1_only, m2_only };

AttentionMask full_mask(const SequenceLayout& layout);
AttentionMask cross_modal_block_mask(const SequenceLayout& layout);
AttentionMask task_cls_mask(const SequenceLayout& layout, SingleTask task);
AttentionMask intersect(const AttentionMask& a, const AttentionMask& b);

// Mask for one layer of the stream driven by fusion vector `policy`
// (0/1 per layer). Throws MaskError if any row ends up empty.
AttentionMask compose(std::size_t layer, std::span<const int> policy, const SequenceLayout& layout);
// compose() at a layer whose fusion flag is `fused`.
AttentionMask compose_flag(bool fused, const SequenceLayout& layout);

// Input positions that can influence output position `target` after the
// stack of layers (residual paths included).
std::vector<bool> influence_set(std::span<const AttentionMask> layers, std::size_t target);

// Static isolation proof for a stack depth and layout: the single-modality
// stream keeps cls_m1 free of modality 2 (and vice versa), and the fused
// stream never reads the single-modality class tokens, for every policy in
// the suffix-ones space. Throws MaskError naming the violation.
void verify_isolation(const SequenceLayout& layout, std::size_t depth);

// One row per line, '1' allowed / '0' blocked.
std::string dump(const AttentionMask& mask);

}  // namespace mmr
