// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <vector>

#include "mmrobust/masks.hpp"
#include "mmrobust/policy.hpp"
#include "support/oracles.hpp"

using namespace mmr;
using oracle::R;

namespace {

R role_of(const SequenceLayout& l, std::size_t i) {
  if (i == l.cls_joint_idx) return R::joint;
  if (i == l.cls_m1_idx) return R::c1;
  if (i == l.cls_m2_idx) return R::c2;
  return l.m1_range.contains(i) ? R::t1 : R::t2;
}

BoolMatrix enumerate(const SequenceLayout& l, bool fused) {
  BoolMatrix m(l.size(), l.size(), false);
  for (std::size_t q = 0; q < l.size(); ++q)
    for (std::size_t k = 0; k < l.size(); ++k) m.set(q, k, oracle::may_attend(role_of(l, q), role_of(l, k), fused));
  return m;
}

std::size_t allowed_count(const AttentionMask& m) {
  std::size_t n = 0;
  for (std::size_t q = 0; q < m.size(); ++q) n += m.allowed.row_count(q);
  return n;
}

std::vector<SequenceLayout> layouts() {
  std::vector<SequenceLayout> out;
  for (std::size_t a = 0; a <= 3; ++a)
    for (std::size_t b = 0; b <= 3; ++b)
      if (a + b > 0) out.push_back(SequenceLayout::for_lengths(a, b));
  return out;
}

}  // namespace

TEST_CASE("full mask is all-true and symmetric", "[masks]") {
  const auto m = full_mask(SequenceLayout::for_lengths(1, 1));
  CHECK(m.size() == 5);
  CHECK(allowed_count(m) == 25);
  CHECK(m.symmetric());
  const auto absent = full_mask(SequenceLayout::for_lengths(2, 0));
  CHECK(absent.size() == 5);
  CHECK(allowed_count(absent) == 25);
}

TEST_CASE("cross-modal block mask on the 1+1 layout", "[masks]") {
  const auto l = SequenceLayout::for_lengths(1, 1);
  const auto m = cross_modal_block_mask(l);
  CHECK_FALSE(m(3, 4));
  CHECK_FALSE(m(4, 3));
  CHECK(m(3, 3));
  // By-hand rules: tokens see their block and their class token; class tokens
  // see themselves and their modality; cls_joint sees itself.
  const char* expect =
      "10000\n"
      "01010\n"
      "00101\n"
      "01010\n"
      "00101\n";
  CHECK(dump(m) == expect);
}

TEST_CASE("task class-token masks", "[masks]") {
  const auto l = SequenceLayout::for_lengths(2, 3);
  const auto m2 = task_cls_mask(l, SingleTask::m2_only);
  for (std::size_t k = 0; k < l.size(); ++k) {
    CHECK(m2(l.cls_m2_idx, k) == (k == l.cls_m2_idx || l.m2_range.contains(k)));
    if (k != l.cls_m2_idx) CHECK_FALSE(m2(k, l.cls_m2_idx));
  }
  const auto absent = SequenceLayout::for_lengths(0, 2);
  const auto m1 = task_cls_mask(absent, SingleTask::m1_only);
  CHECK(m1.allowed.row_count(absent.cls_m1_idx) == 1);
  CHECK(m1(absent.cls_m1_idx, absent.cls_m1_idx));

  const auto small = SequenceLayout::for_lengths(1, 1);
  CHECK(dump(task_cls_mask(small, SingleTask::m1_only)) ==
        "10111\n"
        "01010\n"
        "10111\n"
        "10111\n"
        "10111\n");
}

TEST_CASE("compose matches the role enumeration for every layout and policy", "[masks][property]") {
  for (const auto& l : layouts()) {
    for (std::size_t depth = 1; depth <= 4; ++depth) {
      for (std::size_t first = 0; first < depth; ++first) {
        const auto s = fusion_from_index(first, depth);
        for (std::size_t layer = 0; layer < depth; ++layer) {
          INFO("len " << l.m1_range.size() << "," << l.m2_range.size() << " depth " << depth << " layer " << layer);
          CHECK(compose(layer, s, l).allowed == enumerate(l, s[layer] == 1));
        }
      }
    }
  }
}

TEST_CASE("compose examples", "[masks]") {
  const auto l = SequenceLayout::for_lengths(2, 2);
  const std::vector<int> s{0, 0, 1, 1};
  CHECK(compose(0, s, l) == intersect(intersect(cross_modal_block_mask(l), task_cls_mask(l, SingleTask::m1_only)),
                                      task_cls_mask(l, SingleTask::m2_only)));
  const auto all_ones = std::vector<int>(4, 1);
  for (std::size_t layer = 0; layer < 4; ++layer) {
    CHECK(compose(layer, all_ones, l) ==
          intersect(intersect(full_mask(l), task_cls_mask(l, SingleTask::m1_only)),
                    task_cls_mask(l, SingleTask::m2_only)));
    for (std::size_t q = 3; q < l.size(); ++q)
      for (std::size_t k = 3; k < l.size(); ++k) CHECK(compose(layer, all_ones, l)(q, k));
  }
  const std::vector<int> two{0, 1};
  const auto one = SequenceLayout::for_lengths(1, 1);
  CHECK(dump(compose(0, two, one)) ==
        "10000\n"
        "01010\n"
        "00101\n"
        "00010\n"
        "00001\n");
  CHECK(dump(compose(1, two, one)) ==
        "10011\n"
        "01010\n"
        "00101\n"
        "10011\n"
        "10011\n");
  CHECK_THROWS_AS(compose(2, two, one), MaskError);
  const std::vector<int> bad{0, 2};
  CHECK_THROWS_AS(compose(1, bad, one), MaskError);
}

TEST_CASE("every composed row has an allowed entry", "[masks][property]") {
  for (const auto& l : layouts())
    for (bool fused : {false, true}) {
      const auto m = compose_flag(fused, l);
      for (std::size_t q = 0; q < m.size(); ++q) CHECK(m.allowed.row_count(q) >= 1);
    }
}

TEST_CASE("static reachability keeps single-modality class tokens isolated", "[masks][property]") {
  for (const auto& l : layouts()) {
    for (std::size_t depth = 1; depth <= 6; ++depth) CHECK_NOTHROW(verify_isolation(l, depth));
    const std::vector<AttentionMask> stack(3, compose_flag(false, l));
    const auto reach = influence_set(stack, l.cls_m1_idx);
    for (std::size_t k = 0; k < l.size(); ++k) {
      const R r = role_of(l, k);
      if (reach[k]) CHECK((r == R::c1 || r == R::t1));
    }
  }
}

TEST_CASE("influence set follows attention transitively", "[masks]") {
  const auto l = SequenceLayout::for_lengths(1, 1);
  // One fused layer then a block layer: cls_joint reaches tokens of both
  // modalities only through the fused layer.
  const std::vector<AttentionMask> fused_last{compose_flag(false, l), compose_flag(true, l)};
  const auto reach = influence_set(fused_last, l.cls_joint_idx);
  CHECK(reach == std::vector<bool>{true, false, false, true, true});
  const std::vector<AttentionMask> never{compose_flag(false, l), compose_flag(false, l)};
  CHECK(influence_set(never, l.cls_joint_idx) == std::vector<bool>{true, false, false, false, false});
}

TEST_CASE("a full mask breaks isolation and the reachability check sees it", "[masks]") {
  const auto l = SequenceLayout::for_lengths(2, 2);
  const std::vector<AttentionMask> leaky{full_mask(l), full_mask(l)};
  const auto reach = influence_set(leaky, l.cls_m1_idx);
  CHECK(reach[l.m2_range.begin]);
}
