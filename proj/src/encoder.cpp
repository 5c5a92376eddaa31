// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmrobust/encoder.hpp"

#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmr {

void EncoderConfig::validate(std::size_t heads) const {
  if (d_model == 0 || heads == 0 || d_model % heads != 0) {
    throw std::invalid_argument("encoder: d_model (" + std::to_string(d_model) + ") must be divisible by heads (" +
                                std::to_string(heads) + ")");
  }
  if (vocab1 == 0 || vocab2 == 0) throw std::invalid_argument("encoder: vocabularies must be positive");
  if (max_len1 == 0 || max_len2 == 0) throw std::invalid_argument("encoder: maximum lengths must be positive");
}

SequenceLayout SequenceLayout::for_lengths(std::size_t n1, std::size_t n2) {
  SequenceLayout l;
  l.m1_range = {3, 3 + n1};
  l.m2_range = {3 + n1, 3 + n1 + n2};
  l.present1 = n1 > 0;
  l.present2 = n2 > 0;
  return l;
}

Role SequenceLayout::role(std::size_t i) const {
  if (i == cls_joint_idx) return Role::cls_joint;
  if (i == cls_m1_idx) return Role::cls_m1;
  if (i == cls_m2_idx) return Role::cls_m2;
  if (m1_range.contains(i)) return Role::modality1;
  if (m2_range.contains(i)) return Role::modality2;
  throw std::out_of_range("position " + std::to_string(i) + " outside sequence of length " + std::to_string(size()));
}

SequenceLayout layout_of(const Sample& s) {
  if (!s.present1 && !s.present2) throw std::invalid_argument("sample has no modality present");
  if (s.present1 && s.tokens1.empty()) throw std::invalid_argument("modality 1 marked present but has no tokens");
  if (s.present2 && s.tokens2.empty()) throw std::invalid_argument("modality 2 marked present but has no tokens");
  return SequenceLayout::for_lengths(s.present1 ? s.tokens1.size() : 0, s.present2 ? s.tokens2.size() : 0);
}

void init_embedding_params(ParameterSet& params, const EncoderConfig& cfg, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> normal(0.0, stddev);
  auto table = [&](std::size_t rows) {
    Tensor t({rows, cfg.d_model});
    for (auto& v : t.values()) v = normal(rng);
    return t;
  };
  params.add(embed_names::tok1, table(cfg.vocab1));
  params.add(embed_names::tok2, table(cfg.vocab2));
  params.add(embed_names::pos1, table(cfg.max_len1));
  params.add(embed_names::pos2, table(cfg.max_len2));
  params.add(embed_names::type, table(2));
  params.add(embed_names::cls, table(3));
}

namespace {

Var embed_modality(const std::vector<int>& tokens, std::size_t vocab, std::size_t max_len, int type_id,
                   Var tok_table, Var pos_table, Var type_table) {
  if (tokens.size() > max_len) {
    throw std::invalid_argument("modality " + std::to_string(type_id + 1) + " has " + std::to_string(tokens.size()) +
                                " tokens, maximum is " + std::to_string(max_len));
  }
  for (int id : tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw std::out_of_range("modality " + std::to_string(type_id + 1) + " token id " + std::to_string(id) +
                              " outside vocabulary of size " + std::to_string(vocab));
    }
  }
  std::vector<int> positions(tokens.size());
  std::iota(positions.begin(), positions.end(), 0);
  const int type_ids[] = {type_id};
  return add(add(gather_rows(tok_table, tokens), gather_rows(pos_table, positions)), gather_rows(type_table, type_ids));
}

}  // namespace

EmbeddedSequence embed_sample(Tape& tape, const Sample& sample, const EncoderConfig& cfg, ParameterSet& params) {
  EmbeddedSequence out;
  out.layout = layout_of(sample);
  Var type_table = tape.parameter(params.get(embed_names::type));
  std::vector<Var> parts{tape.parameter(params.get(embed_names::cls))};
  if (sample.present1) {
    parts.push_back(embed_modality(sample.tokens1, cfg.vocab1, cfg.max_len1, 0,
                                   tape.parameter(params.get(embed_names::tok1)),
                                   tape.parameter(params.get(embed_names::pos1)), type_table));
  }
  if (sample.present2) {
    parts.push_back(embed_modality(sample.tokens2, cfg.vocab2, cfg.max_len2, 1,
                                   tape.parameter(params.get(embed_names::tok2)),
                                   tape.parameter(params.get(embed_names::pos2)), type_table));
  }
  out.sequence = concat_rows(parts);
  return out;
}

}  // namespace mmr
