// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

// Define-by-run reverse-mode automatic differentiation.
//
// A Tape records every operation applied to Vars created on it. Calling
// backward() on a scalar Var walks the tape once, in reverse creation order,
// and accumulates gradients into every leaf that requires them: Vars made
// with Tape::variable() keep their gradient on the tape, Vars bound to a
// Parameter add theirs into Parameter::grad.
//
// A tape is single-use: after backward() it is frozen, and both a second
// backward() and recording new operations throw TapeStateError until reset()
// is called. Each training step builds a fresh graph.

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mmrobust/tensor.hpp"

namespace mmr {

class TapeStateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class FullyMaskedRowError : public std::runtime_error {
 public:
  FullyMaskedRowError(std::size_t row)
      : std::runtime_error("masked_softmax: fully masked row " + std::to_string(row)), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // same shape as value; zero until a backward pass touches it
};

// Named parameters with stable addresses.
class ParameterSet {
 public:
  Parameter& add(std::string name, Tensor init);
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::deque<Parameter>& items() { return params_; }
  const std::deque<Parameter>& items() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  bool operator==(const ParameterSet& other) const;

 private:
  std::deque<Parameter> params_;
};

class Tape;

// Handle to a node on a Tape. Cheap to copy.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  // Receives the node's forward value and its accumulated gradient.
  using BackwardFn = std::function<void(const Tensor& value, const Tensor& grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  // Binds a parameter as a leaf; repeated calls return the same node.
  Var parameter(Parameter& p);

  void backward(Var loss);
  // Gradient of the last backward() with respect to v; zeros if v was not
  // reached.
  Tensor grad(Var v) const;

  void reset();
  std::size_t size() const { return nodes_.size(); }
  bool differentiated() const { return differentiated_; }

  // Used by operation implementations.
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn fn);
  // Gradient buffer of an input node, zero-initialised on first access.
  Tensor& grad_slot(Var v);

  const Tensor& value_of(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad_of(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  const char* op_of(int id) const { return nodes_[static_cast<std::size_t>(id)].op; }
  const std::vector<int>& inputs_of(int id) const { return nodes_[static_cast<std::size_t>(id)].inputs; }

 private:
  struct Node {
    const char* op;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<int> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  void ensure_recording() const;
  void check_owner(Var v) const;

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
  bool differentiated_ = false;
};

// ---- operations -----------------------------------------------------------
// Elementwise binary ops broadcast numpy-style (right-aligned extents, 1
// stretches). Last-axis ops treat a tensor as rows x cols with cols equal to
// the trailing extent.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var matmul(Var a, Var b);
Var transpose(Var a);

Var softmax(Var a);
Var log_softmax(Var a);
// Masked positions get exactly zero probability. Throws FullyMaskedRowError
// when a row has no allowed position.
Var masked_softmax(Var a, const BoolMatrix& allowed);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

Var gelu(Var a);
Var sigmoid(Var a);
Var log(Var a);
Var softplus(Var a);

Var gather_rows(Var table, std::span<const int> ids);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var reshape(Var a, Shape shape);
Var element(Var a, std::size_t flat_index);

Var sum(Var a);
Var mean(Var a);

Var detach(Var a);
// Forward value is exactly one-hot at the lowest-index maximum of `a`; the
// backward pass forwards the incoming gradient unchanged (straight-through).
Var straight_through_onehot(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace mmr
