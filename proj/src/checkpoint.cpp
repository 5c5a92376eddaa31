// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmrobust/checkpoint.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mmrobust/policy.hpp"

namespace mmr {

std::string hex_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_double(const std::string& token) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0' || errno == ERANGE) {
    throw CheckpointError("bad floating-point value '" + token + "'");
  }
  return v;
}

void write_checkpoint(std::ostream& os, const Checkpoint& c) {
  os << "mmrobust-checkpoint v1\n";
  os << "model " << c.model.layers << ' ' << c.model.heads << ' ' << c.model.d_model << ' ' << c.model.d_ff << ' '
     << c.model.n_classes << ' ' << to_string(c.model.task_type) << '\n';
  os << "encoder " << c.encoder.d_model << ' ' << c.encoder.vocab1 << ' ' << c.encoder.vocab2 << ' '
     << c.encoder.max_len1 << ' ' << c.encoder.max_len2 << '\n';
  os << "policy";
  for (int s : c.policy) os << ' ' << s;
  os << '\n';
  if (!c.policy.empty()) os << "fusion_index " << fusion_index(c.policy) << '\n';
  if (!c.alpha.empty()) {
    os << "alpha";
    for (double a : c.alpha) os << ' ' << hex_double(a);
    os << '\n';
  }
  for (const auto& [k, v] : c.meta) {
    if (k.find_first_of(" \t\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw CheckpointError("meta entries must be single-line and keys space-free: '" + k + "'");
    }
    os << "meta " << k << ' ' << v << '\n';
  }
  for (const auto& h : c.history) {
    os << "history " << h.outer_step << ' ' << h.argmax << ' ' << hex_double(h.val_loss);
    for (double s : h.soft) os << ' ' << hex_double(s);
    os << '\n';
  }
  for (const auto& p : c.params.items()) {
    os << "param " << p.name << ' ' << p.value.rank();
    for (auto e : p.value.shape()) os << ' ' << e;
    os << '\n';
    for (std::size_t i = 0; i < p.value.size(); ++i) os << (i ? " " : "") << hex_double(p.value[i]);
    os << '\n';
  }
  os << "end\n";
}

Checkpoint read_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "mmrobust-checkpoint v1") throw CheckpointError("not a mmrobust checkpoint");
  Checkpoint c;
  bool saw_model = false, saw_encoder = false, saw_end = false;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag.empty()) continue;
    if (tag == "end") {
      saw_end = true;
      break;
    } else if (tag == "model") {
      std::string task;
      ls >> c.model.layers >> c.model.heads >> c.model.d_model >> c.model.d_ff >> c.model.n_classes >> task;
      if (!ls) throw CheckpointError("malformed model line");
      c.model.task_type = parse_task_type(task);
      saw_model = true;
    } else if (tag == "encoder") {
      ls >> c.encoder.d_model >> c.encoder.vocab1 >> c.encoder.vocab2 >> c.encoder.max_len1 >> c.encoder.max_len2;
      if (!ls) throw CheckpointError("malformed encoder line");
      saw_encoder = true;
    } else if (tag == "policy") {
      int s;
      while (ls >> s) c.policy.push_back(s);
    } else if (tag == "fusion_index") {
      continue;  // derived from policy
    } else if (tag == "alpha") {
      std::string tok;
      while (ls >> tok) c.alpha.push_back(parse_double(tok));
    } else if (tag == "meta") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls >> std::ws, value);
      c.meta[key] = value;
    } else if (tag == "history") {
      PolicyHistoryRow h;
      std::string tok;
      ls >> h.outer_step >> h.argmax >> tok;
      if (!ls) throw CheckpointError("malformed history line");
      h.val_loss = parse_double(tok);
      while (ls >> tok) h.soft.push_back(parse_double(tok));
      c.history.push_back(std::move(h));
    } else if (tag == "param") {
      std::string name;
      std::size_t rank = 0;
      ls >> name >> rank;
      Shape shape(rank);
      for (auto& e : shape) ls >> e;
      if (!ls) throw CheckpointError("malformed param header: " + line);
      std::string values;
      if (!std::getline(is, values)) throw CheckpointError("missing values for parameter " + name);
      std::istringstream vs(values);
      std::vector<double> data;
      std::string tok;
      while (vs >> tok) data.push_back(parse_double(tok));
      try {
        c.params.add(name, Tensor(shape, std::move(data)));
      } catch (const std::exception& e) {
        throw CheckpointError("parameter " + name + ": " + e.what());
      }
    } else {
      throw CheckpointError("unknown checkpoint record '" + tag + "'");
    }
  }
  if (!saw_model || !saw_encoder || !saw_end) throw CheckpointError("truncated checkpoint");
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path);
  if (!os) throw CheckpointError("cannot write " + path);
  write_checkpoint(os, ckpt);
  if (!os) throw CheckpointError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw CheckpointError("cannot open " + path);
  return read_checkpoint(is);
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  Model m(ckpt.model, ckpt.encoder, 0);
  try {
    m.load_params(ckpt.params);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(e.what());
  }
  return m;
}

}  // namespace mmr
