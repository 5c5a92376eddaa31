// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmrobust/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace mmr {

void ModelConfig::validate() const {
  if (layers == 0) throw std::invalid_argument("model: layers must be >= 1");
  if (heads == 0 || d_model % heads != 0) {
    throw std::invalid_argument("model: d_model (" + std::to_string(d_model) + ") must be divisible by heads (" +
                                std::to_string(heads) + ")");
  }
  if (d_ff == 0) throw std::invalid_argument("model: d_ff must be positive");
  if (n_classes < 2) throw std::invalid_argument("model: n_classes must be >= 2");
  if (task_type == TaskType::binary && n_classes != 2) throw std::invalid_argument("model: binary needs n_classes = 2");
}

namespace {

std::string layer_name(std::size_t l, const char* suffix) { return "layer" + std::to_string(l) + "." + suffix; }

constexpr const char* kHeadNames[3][2] = {
    {"head.joint.w", "head.joint.b"}, {"head.m1.w", "head.m1.b"}, {"head.m2.w", "head.m2.b"}};

Tensor xavier(std::mt19937_64& rng, std::size_t fan_in, std::size_t fan_out) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)));
  Tensor t({fan_in, fan_out});
  for (auto& v : t.values()) v = normal(rng);
  return t;
}

}  // namespace

Model::Model(const ModelConfig& cfg, const EncoderConfig& enc, std::uint64_t seed) : cfg_(cfg), enc_(enc) {
  cfg_.validate();
  enc_.validate(cfg_.heads);
  if (enc_.d_model != cfg_.d_model) throw std::invalid_argument("model and encoder d_model differ");
  std::mt19937_64 rng(seed);
  init_embedding_params(params_, enc_, rng, 0.5);
  const std::size_t d = cfg_.d_model;
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    params_.add(layer_name(l, "ln1.gain"), Tensor({d}, 1.0));
    params_.add(layer_name(l, "ln1.bias"), Tensor({d}, 0.0));
    for (const char* p : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) {
      params_.add(layer_name(l, p), xavier(rng, d, d));
    }
    for (const char* p : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"}) params_.add(layer_name(l, p), Tensor({d}, 0.0));
    params_.add(layer_name(l, "ln2.gain"), Tensor({d}, 1.0));
    params_.add(layer_name(l, "ln2.bias"), Tensor({d}, 0.0));
    params_.add(layer_name(l, "mlp.w1"), xavier(rng, d, cfg_.d_ff));
    params_.add(layer_name(l, "mlp.b1"), Tensor({cfg_.d_ff}, 0.0));
    params_.add(layer_name(l, "mlp.w2"), xavier(rng, cfg_.d_ff, d));
    params_.add(layer_name(l, "mlp.b2"), Tensor({d}, 0.0));
  }
  params_.add("final_ln.gain", Tensor({d}, 1.0));
  params_.add("final_ln.bias", Tensor({d}, 0.0));
  const std::size_t out = cfg_.output_width();
  for (const auto& h : kHeadNames) {
    params_.add(h[0], xavier(rng, d, out));
    params_.add(h[1], Tensor({out}, 0.0));
  }
}

void Model::load_params(const ParameterSet& params) {
  if (params.size() != params_.size()) {
    throw std::invalid_argument("checkpoint has " + std::to_string(params.size()) + " parameters, model expects " +
                                std::to_string(params_.size()));
  }
  for (auto& p : params_.items()) {
    if (!params.contains(p.name)) throw std::invalid_argument("checkpoint lacks parameter '" + p.name + "'");
    const Parameter& src = params.get(p.name);
    if (src.value.shape() != p.value.shape()) {
      throw std::invalid_argument("parameter '" + p.name + "' has shape " + shape_str(src.value.shape()) +
                                  ", expected " + shape_str(p.value.shape()));
    }
    p.value = src.value;
  }
  params_.zero_grad();
}

Var mha_forward(Var seq, const AttentionMask& mask, const AttentionWeights& w, std::size_t heads) {
  const std::size_t d = seq.value().cols();
  if (heads == 0 || d % heads != 0) throw DimensionError("mha_forward: d_model not divisible by head count");
  const std::size_t dh = d / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
  Var q = add(matmul(seq, w.wq), w.bq);
  Var k = add(matmul(seq, w.wk), w.bk);
  Var v = add(matmul(seq, w.wv), w.bv);
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : slice_cols(q, h * dh, dh);
    Var kh = heads == 1 ? k : slice_cols(k, h * dh, dh);
    Var vh = heads == 1 ? v : slice_cols(v, h * dh, dh);
    Var scores = scale(matmul(qh, transpose(kh)), scale_factor);
    outs.push_back(matmul(masked_softmax(scores, mask.allowed), vh));
  }
  Var merged = heads == 1 ? outs.front() : concat_cols(outs);
  return add(matmul(merged, w.wo), w.bo);
}

namespace {

struct LayerVars {
  Var ln1_g, ln1_b, ln2_g, ln2_b;
  AttentionWeights attn;
  Var w1, b1, w2, b2;
};

LayerVars bind_layer(Tape& tape, ParameterSet& ps, std::size_t l) {
  auto p = [&](const char* s) { return tape.parameter(ps.get(layer_name(l, s))); };
  LayerVars v;
  v.ln1_g = p("ln1.gain");
  v.ln1_b = p("ln1.bias");
  v.ln2_g = p("ln2.gain");
  v.ln2_b = p("ln2.bias");
  v.attn = {p("attn.wq"), p("attn.bq"), p("attn.wk"), p("attn.bk"),
            p("attn.wv"), p("attn.bv"), p("attn.wo"), p("attn.bo")};
  v.w1 = p("mlp.w1");
  v.b1 = p("mlp.b1");
  v.w2 = p("mlp.w2");
  v.b2 = p("mlp.b2");
  return v;
}

Var mlp_block(Var h, const LayerVars& lv) {
  Var x = layer_norm(h, lv.ln2_g, lv.ln2_b);
  return add(h, add(matmul(gelu(add(matmul(x, lv.w1), lv.b1)), lv.w2), lv.b2));
}

Var layer_forward(Var h, const AttentionMask& mask, const LayerVars& lv, std::size_t heads) {
  Var a = mha_forward(layer_norm(h, lv.ln1_g, lv.ln1_b), mask, lv.attn, heads);
  return mlp_block(add(h, a), lv);
}

// Attention output mixed by a differentiable gate; exact when gate is 0 or 1.
Var gated_layer_forward(Tape& tape, Var h, Var gate, const AttentionMask& full, const AttentionMask& block,
                        const LayerVars& lv, std::size_t heads) {
  Var x = layer_norm(h, lv.ln1_g, lv.ln1_b);
  Var a_full = mha_forward(x, full, lv.attn, heads);
  Var a_block = mha_forward(x, block, lv.attn, heads);
  Var one_minus = sub(tape.constant(Tensor::scalar(1.0)), gate);
  Var a = add(mul(gate, a_full), mul(one_minus, a_block));
  return mlp_block(add(h, a), lv);
}

Var head_logits(Tape& tape, ParameterSet& ps, Var embedding_row, int head) {
  Var w = tape.parameter(ps.get(kHeadNames[head][0]));
  Var b = tape.parameter(ps.get(kHeadNames[head][1]));
  Var logits = add(matmul(embedding_row, w), b);
  return reshape(logits, Shape{logits.value().cols()});
}

}  // namespace

ForwardResult model_forward(Tape& tape, Model& model, const Sample& sample, const LayerGates& gates,
                            const ForwardOptions& opts) {
  const ModelConfig& cfg = model.config();
  ParameterSet& ps = model.params();
  const std::size_t depth = cfg.layers;
  if (gates.hard.size() != depth) {
    throw std::invalid_argument("policy length " + std::to_string(gates.hard.size()) + " does not match depth " +
                                std::to_string(depth));
  }
  if (gates.soft.valid() && gates.soft.value().size() != depth) {
    throw std::invalid_argument("soft policy length does not match depth");
  }
  for (int s : gates.hard) {
    if (s != 0 && s != 1) throw std::invalid_argument("policy entries must be 0 or 1");
  }

  EmbeddedSequence emb = embed_sample(tape, sample, model.encoder(), ps);
  ForwardResult result;
  result.layout = emb.layout;
  const AttentionMask block = compose_flag(false, emb.layout);
  const AttentionMask full = compose_flag(true, emb.layout);

  std::vector<LayerVars> layers;
  layers.reserve(depth);
  for (std::size_t l = 0; l < depth; ++l) layers.push_back(bind_layer(tape, ps, l));

  // Shared prefix: both streams are block-masked until the first fused layer.
  std::size_t fork = depth;
  if (opts.joint) {
    fork = 0;
    if (!gates.soft.valid()) {
      while (fork < depth && gates.hard[fork] == 0) ++fork;
    }
  }
  Var h = emb.sequence;
  for (std::size_t l = 0; l < fork; ++l) h = layer_forward(h, block, layers[l], cfg.heads);

  Var ln_g = tape.parameter(ps.get("final_ln.gain"));
  Var ln_b = tape.parameter(ps.get("final_ln.bias"));

  if (opts.joint) {
    Var hj = h;
    for (std::size_t l = fork; l < depth; ++l) {
      if (gates.soft.valid()) {
        hj = gated_layer_forward(tape, hj, element(gates.soft, l), full, block, layers[l], cfg.heads);
      } else {
        hj = layer_forward(hj, gates.hard[l] ? full : block, layers[l], cfg.heads);
      }
    }
    Var cls = layer_norm(slice_rows(hj, emb.layout.cls_joint_idx, 1), ln_g, ln_b);
    result.logits_joint = head_logits(tape, ps, cls, 0);
  }
  if (opts.unimodal) {
    Var hu = h;
    for (std::size_t l = fork; l < depth; ++l) hu = layer_forward(hu, block, layers[l], cfg.heads);
    Var cls = layer_norm(slice_rows(hu, emb.layout.cls_m1_idx, 2), ln_g, ln_b);
    result.logits_m1 = head_logits(tape, ps, slice_rows(cls, 0, 1), 1);
    result.logits_m2 = head_logits(tape, ps, slice_rows(cls, 1, 1), 2);
  }
  return result;
}

}  // namespace mmr
