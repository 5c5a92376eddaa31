// Copyright 2026 The mmrobust Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmrobust/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

#include <Eigen/Core>

namespace mmr {

// ---- ParameterSet ---------------------------------------------------------

Parameter& ParameterSet::add(std::string name, Tensor init) {
  if (contains(name)) throw std::invalid_argument("parameter '" + name + "' already exists");
  Tensor grad(init.shape(), 0.0);
  params_.push_back(Parameter{std::move(name), std::move(init), std::move(grad)});
  return params_.back();
}

Parameter& ParameterSet::get(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

const Parameter& ParameterSet::get(std::string_view name) const {
  return const_cast<ParameterSet*>(this)->get(name);
}

bool ParameterSet::contains(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) {
    if (p.grad.shape() != p.value.shape()) {
      p.grad = Tensor(p.value.shape(), 0.0);
    } else {
      p.grad.fill(0.0);
    }
  }
}

bool ParameterSet::operator==(const ParameterSet& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name != other.params_[i].name || !(params_[i].value == other.params_[i].value)) {
      return false;
    }
  }
  return true;
}

// ---- Var / Tape -----------------------------------------------------------

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("use of an unbound Var");
  return tape_->value_of(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad_of(id_); }

void Tape::ensure_recording() const {
  if (differentiated_) {
    throw TapeStateError("tape already differentiated; reset() it before recording a new forward pass");
  }
}

void Tape::check_owner(Var v) const {
  if (v.tape_ != this) throw std::logic_error("Var belongs to a different tape");
}

Var Tape::constant(Tensor value) {
  ensure_recording();
  nodes_.push_back(Node{"constant", std::move(value), {}, false, {}, {}, nullptr});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::variable(Tensor value) {
  ensure_recording();
  nodes_.push_back(Node{"variable", std::move(value), {}, true, {}, {}, nullptr});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::parameter(Parameter& p) {
  ensure_recording();
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  nodes_.push_back(Node{"parameter", p.value, {}, true, {}, {}, &p});
  const int id = static_cast<int>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  ensure_recording();
  Node node{op, std::move(value), {}, false, {}, {}, nullptr};
  bool inputs_finite = true;
  for (const Var& v : inputs) {
    check_owner(v);
    node.inputs.push_back(v.id_);
    node.requires_grad = node.requires_grad || v.requires_grad();
    inputs_finite = inputs_finite && v.value().all_finite();
  }
#ifndef NDEBUG
  if (inputs_finite && !node.value.all_finite()) {
    throw std::runtime_error(std::string(op) + ": non-finite output from finite inputs");
  }
#endif
  (void)inputs_finite;
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Tensor& Tape::grad_slot(Var v) {
  check_owner(v);
  Node& n = nodes_[static_cast<std::size_t>(v.id_)];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::backward(Var loss) {
  check_owner(loss);
  if (differentiated_) throw TapeStateError("backward called twice on the same tape without a new forward pass");
  if (nodes_.empty()) throw TapeStateError("backward on an empty tape");
  if (loss.value().size() != 1) {
    throw DimensionError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  differentiated_ = true;
  grad_slot(loss).fill(1.0);
  for (int id = loss.id_; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(n.value, n.grad);
    if (n.param) {
      Tensor& pg = n.param->grad;
      if (pg.shape() != n.param->value.shape()) pg = Tensor(n.param->value.shape(), 0.0);
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
    }
  }
}

Tensor Tape::grad(Var v) const {
  check_owner(v);
  const Node& n = nodes_[static_cast<std::size_t>(v.id_)];
  if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::reset() {
  nodes_.clear();
  param_nodes_.clear();
  differentiated_ = false;
}

// ---- helpers --------------------------------------------------------------

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::logic_error("operation on an unbound Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape()) throw std::logic_error("operands live on different tapes");
  return tape_of(a);
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

std::size_t last_extent(const Tensor& t) { return t.rank() == 0 ? 1 : t.shape().back(); }

// Flat source index of each output element for both operands; empty when the
// operand already has the output shape.
struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> ia;
  std::vector<std::size_t> ib;
  std::size_t a_index(std::size_t i) const { return ia.empty() ? i : ia[i]; }
  std::size_t b_index(std::size_t i) const { return ib.empty() ? i : ib[i]; }
};

std::vector<std::size_t> broadcast_indices(const Shape& src, const Shape& out) {
  const std::size_t rank = out.size();
  std::vector<std::size_t> stride(rank, 0);
  std::size_t s = 1;
  for (std::size_t k = 0; k < src.size(); ++k) {
    const std::size_t src_axis = src.size() - 1 - k;
    const std::size_t out_axis = rank - 1 - k;
    stride[out_axis] = src[src_axis] == 1 ? 0 : s;
    s *= src[src_axis];
  }
  const std::size_t n = shape_size(out);
  std::vector<std::size_t> idx(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < n; ++i) {
    idx[i] = offset;
    for (std::size_t ax = rank; ax-- > 0;) {
      ++counter[ax];
      offset += stride[ax];
      if (counter[ax] < out[ax]) break;
      offset -= stride[ax] * counter[ax];
      counter[ax] = 0;
    }
  }
  return idx;
}

std::shared_ptr<const BroadcastPlan> plan_broadcast(const char* op, const Shape& a, const Shape& b) {
  auto plan = std::make_shared<BroadcastPlan>();
  const std::size_t rank = std::max(a.size(), b.size());
  plan->out.assign(rank, 1);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t ea = k < a.size() ? a[a.size() - 1 - k] : 1;
    const std::size_t eb = k < b.size() ? b[b.size() - 1 - k] : 1;
    std::size_t e = ea;
    if (ea != eb) {
      if (ea == 1) {
        e = eb;
      } else if (eb != 1) {
        shape_error(op, a, b);
      }
    }
    plan->out[rank - 1 - k] = e;
  }
  if (a != plan->out) plan->ia = broadcast_indices(a, plan->out);
  if (b != plan->out) plan->ib = broadcast_indices(b, plan->out);
  return plan;
}

template <typename F>
Tensor broadcast_apply(const BroadcastPlan& plan, const Tensor& a, const Tensor& b, F f) {
  Tensor out(plan.out);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[plan.a_index(i)], b[plan.b_index(i)]);
  return out;
}

template <typename F>
Var unary(const char* op, Var a, F value_fn, std::function<double(double x, double y)> deriv) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = value_fn(x[i]);
  return t.record(op, std::move(y), {a}, [&t, a, deriv](const Tensor& out, const Tensor& g) {
    const Tensor& xin = a.value();
    Tensor& ga = t.grad_slot(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(xin[i], out[i]);
  });
}

}  // namespace

// ---- elementwise ----------------------------------------------------------

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  auto plan = plan_broadcast("add", a.shape(), b.shape());
  Tensor out = broadcast_apply(*plan, a.value(), b.value(), [](double x, double y) { return x + y; });
  return t.record("add", std::move(out), {a, b}, [&t, a, b, plan](const Tensor&, const Tensor& g) {
    if (a.requires_grad()) {
      Tensor& ga = t.grad_slot(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[plan->a_index(i)] += g[i];
    }
    if (b.requires_grad()) {
      Tensor& gb = t.grad_slot(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[plan->b_index(i)] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  auto plan = plan_broadcast("sub", a.shape(), b.shape());
  Tensor out = broadcast_apply(*plan, a.value(), b.value(), [](double x, double y) { return x - y; });
  return t.record("sub", std::move(out), {a, b}, [&t, a, b, plan](const Tensor&, const Tensor& g) {
    if (a.requires_grad()) {
      Tensor& ga = t.grad_slot(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[plan->a_index(i)] += g[i];
    }
    if (b.requires_grad()) {
      Tensor& gb = t.grad_slot(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[plan->b_index(i)] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  auto plan = plan_broadcast("mul", a.shape(), b.shape());
  Tensor out = broadcast_apply(*plan, a.value(), b.value(), [](double x, double y) { return x * y; });
  return t.record("mul", std::move(out), {a, b}, [&t, a, b, plan](const Tensor&, const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (a.requires_grad()) {
      Tensor& ga = t.grad_slot(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[plan->a_index(i)] += g[i] * bv[plan->b_index(i)];
    }
    if (b.requires_grad()) {
      Tensor& gb = t.grad_slot(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[plan->b_index(i)] += g[i] * av[plan->a_index(i)];
    }
  });
}

Var scale(Var a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var gelu(Var a) {
  return unary(
      "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + x * pdf;
      });
}

Var sigmoid(Var a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var log(Var a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var softplus(Var a) {
  return unary(
      "softplus", a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
}

// ---- linear algebra -------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0]) {
    shape_error("matmul", av.shape(), bv.shape());
  }
  const auto m = static_cast<Eigen::Index>(av.shape()[0]);
  const auto k = static_cast<Eigen::Index>(av.shape()[1]);
  const auto n = static_cast<Eigen::Index>(bv.shape()[1]);
  Tensor out({av.shape()[0], bv.shape()[1]});
  // Coefficient-wise product: each output row depends only on its input row,
  // bit for bit, whatever the row count.
  MutMap(out.data().data(), m, n).noalias() =
      ConstMap(av.data().data(), m, k).lazyProduct(ConstMap(bv.data().data(), k, n));
  return t.record("matmul", std::move(out), {a, b}, [&t, a, b, m, k, n](const Tensor&, const Tensor& g) {
    ConstMap gm(g.data().data(), m, n);
    if (a.requires_grad()) {
      MutMap(t.grad_slot(a).data().data(), m, k).noalias() += gm * ConstMap(b.value().data().data(), k, n).transpose();
    }
    if (b.requires_grad()) {
      MutMap(t.grad_slot(b).data().data(), k, n).noalias() += ConstMap(a.value().data().data(), m, k).transpose() * gm;
    }
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  if (av.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + shape_str(av.shape()));
  const std::size_t r = av.shape()[0], c = av.shape()[1];
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return t.record("transpose", std::move(out), {a}, [&t, a, r, c](const Tensor&, const Tensor& g) {
    Tensor& ga = t.grad_slot(a);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

// ---- last-axis normalisations ---------------------------------------------

namespace {

void softmax_backward(const Tensor& p, const Tensor& g, Tensor& ga, std::size_t cols) {
  const std::size_t rows = p.size() / cols;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* pr = &p[r * cols];
    const double* gr = &g[r * cols];
    double dot = 0.0;
    for (std::size_t j = 0; j < cols; ++j) dot += pr[j] * gr[j];
    for (std::size_t j = 0; j < cols; ++j) ga[r * cols + j] += pr[j] * (gr[j] - dot);
  }
}

}  // namespace

Var softmax(Var a) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  const std::size_t cols = last_extent(x);
  const std::size_t rows = x.size() / cols;
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &x[r * cols];
    const double mx = *std::max_element(xr, xr + cols);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += (out[r * cols + j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] /= z;
  }
  return t.record("softmax", std::move(out), {a}, [&t, a, cols](const Tensor& p, const Tensor& g) {
    softmax_backward(p, g, t.grad_slot(a), cols);
  });
}

Var log_softmax(Var a) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  const std::size_t cols = last_extent(x);
  const std::size_t rows = x.size() / cols;
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &x[r * cols];
    const double mx = *std::max_element(xr, xr + cols);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += std::exp(xr[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = xr[j] - lse;
  }
  return t.record("log_softmax", std::move(out), {a}, [&t, a, cols](const Tensor& y, const Tensor& g) {
    Tensor& ga = t.grad_slot(a);
    const std::size_t rows = y.size() / cols;
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t j = 0; j < cols; ++j) gs += g[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) ga[r * cols + j] += g[r * cols + j] - std::exp(y[r * cols + j]) * gs;
    }
  });
}

Var masked_softmax(Var a, const BoolMatrix& allowed) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  const std::size_t cols = last_extent(x);
  const std::size_t rows = x.size() / cols;
  if (allowed.rows() != rows || allowed.cols() != cols) {
    shape_error("masked_softmax", x.shape(), Shape{allowed.rows(), allowed.cols()});
  }
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    // Additive -inf on masked logits; masked outputs are then written as an
    // explicit 0 rather than exp(-inf - max).
    double mx = kNegInf;
    bool any = false;
    for (std::size_t j = 0; j < cols; ++j) {
      if (!allowed(r, j)) continue;
      any = true;
      const double v = x[r * cols + j];
      mx = std::isnan(v) || std::isnan(mx) ? v + mx : std::max(mx, v);
    }
    if (!any) throw FullyMaskedRowError(r);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double e = allowed(r, j) ? std::exp(x[r * cols + j] - mx) : 0.0;
      out[r * cols + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] /= z;
  }
  return t.record("masked_softmax", std::move(out), {a}, [&t, a, cols](const Tensor& p, const Tensor& g) {
    softmax_backward(p, g, t.grad_slot(a), cols);
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& t = tape_of(x, gain);
  tape_of(x, bias);
  const Tensor& xv = x.value();
  const std::size_t d = last_extent(xv);
  if (gain.value().size() != d) shape_error("layer_norm", xv.shape(), gain.shape());
  if (bias.value().size() != d) shape_error("layer_norm", xv.shape(), bias.shape());
  const std::size_t rows = xv.size() / d;
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xv[r * d + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xv[r * d + j] - mu) * (xv[r * d + j] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xv[r * d + j] - mu) * rs;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  return t.record("layer_norm", std::move(out), {x, gain, bias},
                  [&t, x, gain, bias, d, rows, xhat, rstd](const Tensor&, const Tensor& g) {
                    const Tensor& gv = gain.value();
                    if (gain.requires_grad()) {
                      Tensor& gg = t.grad_slot(gain);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * (*xhat)[r * d + j];
                    }
                    if (bias.requires_grad()) {
                      Tensor& gb = t.grad_slot(bias);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
                    }
                    if (x.requires_grad()) {
                      Tensor& gx = t.grad_slot(x);
                      const double inv_d = 1.0 / static_cast<double>(d);
                      for (std::size_t r = 0; r < rows; ++r) {
                        double m1 = 0.0, m2 = 0.0;
                        for (std::size_t j = 0; j < d; ++j) {
                          const double dh = g[r * d + j] * gv[j];
                          m1 += dh;
                          m2 += dh * (*xhat)[r * d + j];
                        }
                        m1 *= inv_d;
                        m2 *= inv_d;
                        for (std::size_t j = 0; j < d; ++j) {
                          const double dh = g[r * d + j] * gv[j];
                          gx[r * d + j] += (*rstd)[r] * (dh - m1 - (*xhat)[r * d + j] * m2);
                        }
                      }
                    }
                  });
}

// ---- indexing and layout --------------------------------------------------

Var gather_rows(Var table, std::span<const int> ids) {
  Tape& t = tape_of(table);
  const Tensor& tv = table.value();
  if (tv.rank() != 2) throw DimensionError("gather_rows: table must be rank 2, got " + shape_str(tv.shape()));
  if (ids.empty()) throw DimensionError("gather_rows: empty id list");
  const std::size_t n_rows = tv.shape()[0], d = tv.shape()[1];
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= n_rows) {
      throw std::out_of_range("gather_rows: id " + std::to_string(ids[i]) + " out of range for table with " +
                              std::to_string(n_rows) + " rows");
    }
    std::copy_n(&tv[static_cast<std::size_t>(ids[i]) * d], d, &out[i * d]);
  }
  std::vector<int> kept(ids.begin(), ids.end());
  return t.record("gather_rows", std::move(out), {table}, [&t, table, kept, d](const Tensor&, const Tensor& g) {
    Tensor& gt = t.grad_slot(table);
    for (std::size_t i = 0; i < kept.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) gt[static_cast<std::size_t>(kept[i]) * d + j] += g[i * d + j];
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  Tape& t = tape_of(parts[0]);
  const std::size_t d = parts[0].value().cols();
  std::size_t total = 0;
  for (const Var& p : parts) {
    tape_of(parts[0], p);
    if (p.value().rank() != 2 || p.value().cols() != d) shape_error("concat_rows", parts[0].shape(), p.shape());
    total += p.value().rows();
  }
  Tensor out({total, d});
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    offsets.push_back(off);
    std::copy(p.value().values().begin(), p.value().values().end(), out.values().begin() + static_cast<long>(off));
    off += p.value().size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record("concat_rows", std::move(out), parts, [&t, inputs, offsets](const Tensor&, const Tensor& g) {
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      if (!inputs[k].requires_grad()) continue;
      Tensor& gp = t.grad_slot(inputs[k]);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offsets[k] + i];
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  if (av.rank() != 2 || count == 0 || begin + count > av.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_str(av.shape()));
  }
  const std::size_t d = av.cols();
  Tensor out({count, d});
  std::copy_n(&av[begin * d], count * d, &out[0]);
  return t.record("slice_rows", std::move(out), {a}, [&t, a, begin, d](const Tensor&, const Tensor& g) {
    Tensor& ga = t.grad_slot(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * d + i] += g[i];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  Tape& t = tape_of(parts[0]);
  const std::size_t rows = parts[0].value().rows();
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    tape_of(parts[0], p);
    if (p.value().rank() != 2 || p.value().rows() != rows) shape_error("concat_cols", parts[0].shape(), p.shape());
    offsets.push_back(total);
    total += p.value().cols();
  }
  Tensor out({rows, total});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    const std::size_t c = pv.cols();
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(&pv[r * c], c, &out[r * total + offsets[k]]);
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record("concat_cols", std::move(out), parts,
                  [&t, inputs, offsets, rows, total](const Tensor&, const Tensor& g) {
                    for (std::size_t k = 0; k < inputs.size(); ++k) {
                      if (!inputs[k].requires_grad()) continue;
                      Tensor& gp = t.grad_slot(inputs[k]);
                      const std::size_t c = gp.cols();
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < c; ++j) gp[r * c + j] += g[r * total + offsets[k] + j];
                    }
                  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  if (av.rank() != 2 || count == 0 || begin + count > av.cols()) {
    throw DimensionError("slice_cols: cols [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_str(av.shape()));
  }
  const std::size_t rows = av.rows(), c = av.cols();
  Tensor out({rows, count});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(&av[r * c + begin], count, &out[r * count]);
  return t.record("slice_cols", std::move(out), {a}, [&t, a, begin, count, rows, c](const Tensor&, const Tensor& g) {
    Tensor& ga = t.grad_slot(a);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < count; ++j) ga[r * c + begin + j] += g[r * count + j];
  });
}

Var reshape(Var a, Shape shape) {
  Tape& t = tape_of(a);
  if (shape_size(shape) != a.value().size()) shape_error("reshape", a.shape(), shape);
  Tensor out(std::move(shape), a.value().values());
  return t.record("reshape", std::move(out), {a}, [&t, a](const Tensor&, const Tensor& g) {
    Tensor& ga = t.grad_slot(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var element(Var a, std::size_t flat_index) {
  Tape& t = tape_of(a);
  if (flat_index >= a.value().size()) {
    throw DimensionError("element: index " + std::to_string(flat_index) + " out of range for " + shape_str(a.shape()));
  }
  return t.record("element", Tensor::scalar(a.value()[flat_index]), {a},
                  [&t, a, flat_index](const Tensor&, const Tensor& g) { t.grad_slot(a)[flat_index] += g[0]; });
}

// ---- reductions -----------------------------------------------------------

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return t.record("sum", Tensor::scalar(s), {a}, [&t, a](const Tensor&, const Tensor& g) {
    Tensor& ga = t.grad_slot(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

// ---- gradient routing -----------------------------------------------------

Var detach(Var a) { return tape_of(a).constant(a.value()); }

Var straight_through_onehot(Var a) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  std::size_t best = 0;
  for (std::size_t i = 1; i < av.size(); ++i) {
    if (av[i] > av[best]) best = i;
  }
  Tensor out(av.shape(), 0.0);
  out[best] = 1.0;
  return t.record("straight_through_onehot", std::move(out), {a}, [&t, a](const Tensor&, const Tensor& g) {
    Tensor& ga = t.grad_slot(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

}  // namespace mmr
