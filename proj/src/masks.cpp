// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmrobust/masks.hpp"

#include <sstream>

namespace mmr {

bool AttentionMask::symmetric() const {
  for (std::size_t q = 0; q < size(); ++q)
    for (std::size_t k = 0; k < q; ++k)
      if (allowed(q, k) != allowed(k, q)) return false;
  return true;
}

AttentionMask full_mask(const SequenceLayout& layout) {
  return AttentionMask{BoolMatrix(layout.size(), layout.size(), true)};
}

AttentionMask cross_modal_block_mask(const SequenceLayout& layout) {
  const std::size_t n = layout.size();
  AttentionMask m{BoolMatrix(n, n, false)};
  auto allow_range = [&](std::size_t q, const IndexRange& r) {
    for (std::size_t k = r.begin; k < r.end; ++k) m.allowed.set(q, k, true);
  };
  m.allowed.set(layout.cls_joint_idx, layout.cls_joint_idx, true);
  m.allowed.set(layout.cls_m1_idx, layout.cls_m1_idx, true);
  allow_range(layout.cls_m1_idx, layout.m1_range);
  m.allowed.set(layout.cls_m2_idx, layout.cls_m2_idx, true);
  allow_range(layout.cls_m2_idx, layout.m2_range);
  for (std::size_t q = layout.m1_range.begin; q < layout.m1_range.end; ++q) {
    allow_range(q, layout.m1_range);
    m.allowed.set(q, layout.cls_m1_idx, true);
  }
  for (std::size_t q = layout.m2_range.begin; q < layout.m2_range.end; ++q) {
    allow_range(q, layout.m2_range);
    m.allowed.set(q, layout.cls_m2_idx, true);
  }
  return m;
}

AttentionMask task_cls_mask(const SequenceLayout& layout, SingleTask task) {
  const std::size_t n = layout.size();
  AttentionMask m{BoolMatrix(n, n, true)};
  const std::size_t cls = task == SingleTask::m1_only ? layout.cls_m1_idx : layout.cls_m2_idx;
  const IndexRange& own = task == SingleTask::m1_only ? layout.m1_range : layout.m2_range;
  for (std::size_t k = 0; k < n; ++k) m.allowed.set(cls, k, k == cls || own.contains(k));
  for (std::size_t q = 0; q < n; ++q) {
    if (q != cls) m.allowed.set(q, cls, false);
  }
  return m;
}

AttentionMask intersect(const AttentionMask& a, const AttentionMask& b) {
  if (a.size() != b.size()) {
    throw MaskError("intersect: masks of size " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  AttentionMask out{BoolMatrix(a.size(), a.size(), false)};
  for (std::size_t q = 0; q < a.size(); ++q)
    for (std::size_t k = 0; k < a.size(); ++k) out.allowed.set(q, k, a(q, k) && b(q, k));
  return out;
}

AttentionMask compose_flag(bool fused, const SequenceLayout& layout) {
  AttentionMask m = fused ? full_mask(layout) : cross_modal_block_mask(layout);
  m = intersect(m, task_cls_mask(layout, SingleTask::m1_only));
  m = intersect(m, task_cls_mask(layout, SingleTask::m2_only));
  for (std::size_t q = 0; q < m.size(); ++q) {
    if (m.allowed.row_count(q) == 0) throw MaskError("compose: fully masked row " + std::to_string(q));
  }
  return m;
}

AttentionMask compose(std::size_t layer, std::span<const int> policy, const SequenceLayout& layout) {
  if (layer >= policy.size()) {
    throw MaskError("compose: layer " + std::to_string(layer) + " outside policy of length " +
                    std::to_string(policy.size()));
  }
  if (policy[layer] != 0 && policy[layer] != 1) throw MaskError("compose: policy entries must be 0 or 1");
  return compose_flag(policy[layer] == 1, layout);
}

std::vector<bool> influence_set(std::span<const AttentionMask> layers, std::size_t target) {
  if (layers.empty()) {
    std::vector<bool> only(target + 1, false);
    only[target] = true;
    return only;
  }
  const std::size_t n = layers.front().size();
  std::vector<bool> reach(n, false);
  reach.at(target) = true;
  for (std::size_t l = layers.size(); l-- > 0;) {
    std::vector<bool> next = reach;
    for (std::size_t q = 0; q < n; ++q) {
      if (!reach[q]) continue;
      for (std::size_t k = 0; k < n; ++k) {
        if (layers[l](q, k)) next[k] = true;
      }
    }
    reach = std::move(next);
  }
  return reach;
}

void verify_isolation(const SequenceLayout& layout, std::size_t depth) {
  const std::size_t n = layout.size();
  auto check = [&](const std::vector<AttentionMask>& stack, std::size_t target, auto forbidden, const char* what) {
    const auto reach = influence_set(stack, target);
    for (std::size_t k = 0; k < n; ++k) {
      if (reach[k] && forbidden(layout.role(k))) {
        throw MaskError(std::string("isolation violated: ") + what + " is influenced by position " +
                        std::to_string(k));
      }
    }
  };

  const std::vector<AttentionMask> unimodal(depth, compose_flag(false, layout));
  check(unimodal, layout.cls_m1_idx, [](Role r) { return r != Role::cls_m1 && r != Role::modality1; }, "cls_m1");
  check(unimodal, layout.cls_m2_idx, [](Role r) { return r != Role::cls_m2 && r != Role::modality2; }, "cls_m2");

  for (std::size_t first = 0; first < depth; ++first) {
    std::vector<AttentionMask> fused;
    for (std::size_t l = 0; l < depth; ++l) fused.push_back(compose_flag(l >= first, layout));
    check(fused, layout.cls_joint_idx, [](Role r) { return r == Role::cls_m1 || r == Role::cls_m2; }, "cls_joint");
  }
}

std::string dump(const AttentionMask& mask) {
  std::ostringstream os;
  for (std::size_t q = 0; q < mask.size(); ++q) {
    for (std::size_t k = 0; k < mask.size(); ++k) os << (mask(q, k) ? '1' : '0');
    os << '\n';
  }
  return os.str();
}

}  // namespace mmr
