// Copyright 2026 The mtraj Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MTRAJ__NUMERICS_HPP_
#define MTRAJ__NUMERICS_HPP_

// Dense f64 matrices and a define-by-run reverse-mode tape.
//
// Every value recorded on a tape is a rank-2 Array (scalars are 1x1). Ops are
// free functions over `Var` handles; each one computes its forward value,
// checks it is finite, and registers the adjoint it needs for `Tape::backward`.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mtraj/common.hpp"

namespace mtraj
{

class Array
{
public:
  Array() = default;

  explicit Array(std::vector<std::size_t> shape, double fill = 0.0) : shape_(std::move(shape))
  {
    data_.assign(count(shape_), fill);
  }

  Array(std::vector<std::size_t> shape, std::vector<double> data)
  : shape_(std::move(shape)), data_(std::move(data))
  {
    if (count(shape_) != data_.size()) {
      throw DimensionError(
        "Array: shape " + shape_string(shape_) + " does not match " +
        std::to_string(data_.size()) + " values");
    }
  }

  static Array zeros(std::size_t rows, std::size_t cols) { return Array({rows, cols}, 0.0); }
  static Array filled(std::size_t rows, std::size_t cols, double v) { return Array({rows, cols}, v); }
  static Array scalar(double v) { return Array({1, 1}, std::vector<double>{v}); }
  static Array row(std::vector<double> values)
  {
    const std::size_t n = values.size();
    return Array({1, n}, std::move(values));
  }
  static Array matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
  {
    return Array({rows, cols}, std::move(values));
  }

  const std::vector<std::size_t> & shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
  std::size_t cols() const
  {
    if (shape_.size() == 2) {
      return shape_[1];
    }
    return shape_.empty() ? 1 : data_.size();
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double> & values() { return data_; }
  const std::vector<double> & values() const { return data_; }

  double & operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double & operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool all_finite() const
  {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  /// Bitwise equality of shape and values.
  friend bool operator==(const Array & a, const Array & b)
  {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

  static std::size_t count(const std::vector<std::size_t> & shape)
  {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  static std::string shape_string(const std::vector<std::size_t> & shape)
  {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
      os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
  }

  std::string shape_string() const { return shape_string(shape_); }

private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

namespace kernels
{

// c[m x n] += a[m x k] * b[k x n]
inline void gemm_nn(
  const double * a, const double * b, double * c, std::size_t m, std::size_t k, std::size_t n)
{
  for (std::size_t i = 0; i < m; ++i) {
    double * ci = c + i * n;
    const double * ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) {
        continue;
      }
      const double * bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        ci[j] += av * bp[j];
      }
    }
  }
}

// c[m x k] += a[m x n] * b[k x n]^T
inline void gemm_nt(
  const double * a, const double * b, double * c, std::size_t m, std::size_t n, std::size_t k)
{
  for (std::size_t i = 0; i < m; ++i) {
    const double * ai = a + i * n;
    double * ci = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double * bp = b + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        s += ai[j] * bp[j];
      }
      ci[p] += s;
    }
  }
}

// c[k x n] += a[m x k]^T * b[m x n]
inline void gemm_tn(
  const double * a, const double * b, double * c, std::size_t m, std::size_t k, std::size_t n)
{
  for (std::size_t i = 0; i < m; ++i) {
    const double * ai = a + i * k;
    const double * bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) {
        continue;
      }
      double * cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        cp[j] += av * bi[j];
      }
    }
  }
}

}  // namespace kernels

class Tape;

/// Handle to a node on a tape.
class Var
{
public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape * tape() const { return tape_; }
  std::size_t id() const { return id_; }

  inline const Array & value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  inline double item() const;

private:
  friend class Tape;
  Var(Tape * tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape * tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape
{
public:
  /// Receives the node's output gradient; accumulates into parents via `Tape::grad`.
  using Backward = std::function<void(Tape &, const Array & out_grad)>;

  /// A non-recording tape computes forward values only (no adjoints retained).
  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape &) = delete;
  Tape & operator=(const Tape &) = delete;

  bool recording() const { return record_; }

  Var constant(Array value)
  {
    ensure_rank2("constant", value);
    return push(std::move(value), {}, nullptr, false);
  }

  /// Leaf that receives a gradient.
  Var leaf(Array value)
  {
    ensure_rank2("leaf", value);
    return push(std::move(value), {}, nullptr, true);
  }

  /// Records an op result. Used by the primitive catalog.
  Var record(
    std::string_view op, Array value, std::vector<std::size_t> parents, Backward backward)
  {
    if (!value.all_finite()) {
      throw NumericError(
        std::string(op) + ": non-finite value in output " + value.shape_string());
    }
    bool needs = false;
    for (auto p : parents) {
      needs = needs || nodes_[p].needs_grad;
    }
    if (!record_ || !needs) {
      return push(std::move(value), {}, nullptr, false);
    }
    return push(std::move(value), std::move(parents), std::move(backward), true);
  }

  const Array & value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }

  /// Gradient accumulator of a node during/after backward.
  Array & grad(std::size_t id) { return nodes_[id].grad; }

  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar node. Accumulators are reset on every call.
  void backward(Var loss)
  {
    if (!record_) {
      throw UsageError("backward: tape was created in non-recording mode");
    }
    if (loss.tape() != this) {
      throw UsageError("backward: loss belongs to a different tape");
    }
    const Array & lv = nodes_[loss.id()].value;
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw UsageError("backward: loss must be scalar, got " + lv.shape_string());
    }
    for (auto & n : nodes_) {
      n.reached = false;
      if (n.needs_grad) {
        n.grad = Array(n.value.shape(), 0.0);
      } else {
        n.grad = Array();
      }
    }
    if (!nodes_[loss.id()].needs_grad) {
      nodes_[loss.id()].reached = true;
      return;
    }
    nodes_[loss.id()].grad[0] = 1.0;
    nodes_[loss.id()].reached = true;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node & n = nodes_[i];
      if (!n.reached || !n.backward) {
        continue;
      }
      for (auto p : n.parents) {
        if (nodes_[p].needs_grad) {
          nodes_[p].reached = true;
        }
      }
      n.backward(*this, n.grad);
    }
  }

  /// Gradient of the last backward w.r.t. `v`; zeros when `v` was not reached.
  Array gradient(Var v) const
  {
    const Node & n = nodes_[v.id()];
    if (n.reached && n.grad.size() == n.value.size()) {
      return n.grad;
    }
    return Array(n.value.shape(), 0.0);
  }

  /// Whether `v` is structurally reachable from the last backward's loss.
  bool reached(Var v) const { return nodes_[v.id()].reached; }

private:
  struct Node
  {
    Array value;
    Array grad;
    std::vector<std::size_t> parents;
    Backward backward;
    bool needs_grad = false;
    bool reached = false;
  };

  static void ensure_rank2(std::string_view op, const Array & v)
  {
    if (v.rank() != 2) {
      throw DimensionError(std::string(op) + ": tape values must be rank 2, got " + v.shape_string());
    }
    if (!v.all_finite()) {
      throw NumericError(std::string(op) + ": non-finite input " + v.shape_string());
    }
  }

  Var push(Array value, std::vector<std::size_t> parents, Backward backward, bool needs)
  {
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.backward = std::move(backward);
    n.needs_grad = needs;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  bool record_;
  std::vector<Node> nodes_;
};

inline const Array & Var::value() const { return tape_->value(id_); }

inline double Var::item() const
{
  const Array & v = value();
  if (v.size() != 1) {
    throw UsageError("item: value is not scalar " + v.shape_string());
  }
  return v[0];
}

namespace detail
{

inline Tape & same_tape(std::string_view op, Var a, Var b)
{
  if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
    throw UsageError(std::string(op) + ": operands must live on the same tape");
  }
  return *a.tape();
}

inline void require_same_shape(std::string_view op, const Array & a, const Array & b)
{
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(
      std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

inline void axpy(Array & dst, const Array & src, double s = 1.0)
{
  double * d = dst.data().data();
  const double * x = src.data().data();
  for (std::size_t i = 0, n = dst.size(); i < n; ++i) {
    d[i] += s * x[i];
  }
}

template <typename Fwd, typename Dfdx>
Var unary(std::string_view op, Var a, Fwd fwd, Dfdx dfdx)
{
  Tape & t = *a.tape();
  const Array & av = a.value();
  Array out(av.shape(), 0.0);
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = fwd(av[i]);
  }
  const std::size_t ia = a.id();
  std::size_t self = t.size();
  return t.record(op, std::move(out), {ia}, [ia, self, dfdx](Tape & tp, const Array & g) {
    const Array & x = tp.value(ia);
    const Array & y = tp.value(self);
    Array & ga = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * dfdx(x[i], y[i]);
    }
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitive catalog
// ---------------------------------------------------------------------------

inline Var matmul(Var a, Var b)
{
  Tape & t = detail::same_tape("matmul", a, b);
  const Array & av = a.value();
  const Array & bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) {
    throw DimensionError(
      "matmul: inner dimensions differ " + av.shape_string() + " x " + bv.shape_string());
  }
  Array out = Array::zeros(m, n);
  kernels::gemm_nn(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("matmul", std::move(out), {ia, ib}, [ia, ib, m, k, n](Tape & tp, const Array & g) {
    if (tp.needs_grad(ia)) {
      kernels::gemm_nt(
        g.data().data(), tp.value(ib).data().data(), tp.grad(ia).data().data(), m, n, k);
    }
    if (tp.needs_grad(ib)) {
      kernels::gemm_tn(
        tp.value(ia).data().data(), g.data().data(), tp.grad(ib).data().data(), m, k, n);
    }
  });
}

inline Var add(Var a, Var b)
{
  Tape & t = detail::same_tape("add", a, b);
  detail::require_same_shape("add", a.value(), b.value());
  Array out = a.value();
  detail::axpy(out, b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("add", std::move(out), {ia, ib}, [ia, ib](Tape & tp, const Array & g) {
    if (tp.needs_grad(ia)) {
      detail::axpy(tp.grad(ia), g);
    }
    if (tp.needs_grad(ib)) {
      detail::axpy(tp.grad(ib), g);
    }
  });
}

inline Var sub(Var a, Var b)
{
  Tape & t = detail::same_tape("sub", a, b);
  detail::require_same_shape("sub", a.value(), b.value());
  Array out = a.value();
  detail::axpy(out, b.value(), -1.0);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("sub", std::move(out), {ia, ib}, [ia, ib](Tape & tp, const Array & g) {
    if (tp.needs_grad(ia)) {
      detail::axpy(tp.grad(ia), g);
    }
    if (tp.needs_grad(ib)) {
      detail::axpy(tp.grad(ib), g, -1.0);
    }
  });
}

inline Var mul(Var a, Var b)
{
  Tape & t = detail::same_tape("mul", a, b);
  detail::require_same_shape("mul", a.value(), b.value());
  const Array & av = a.value();
  const Array & bv = b.value();
  Array out(av.shape(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = av[i] * bv[i];
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("mul", std::move(out), {ia, ib}, [ia, ib](Tape & tp, const Array & g) {
    if (tp.needs_grad(ia)) {
      const Array & y = tp.value(ib);
      Array & ga = tp.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * y[i];
      }
    }
    if (tp.needs_grad(ib)) {
      const Array & x = tp.value(ia);
      Array & gb = tp.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) {
        gb[i] += g[i] * x[i];
      }
    }
  });
}

inline Var div(Var a, Var b)
{
  Tape & t = detail::same_tape("div", a, b);
  detail::require_same_shape("div", a.value(), b.value());
  const Array & av = a.value();
  const Array & bv = b.value();
  Array out(av.shape(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (bv[i] == 0.0) {
      throw DomainError("div: division by zero at flat index " + std::to_string(i));
    }
    out[i] = av[i] / bv[i];
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("div", std::move(out), {ia, ib}, [ia, ib](Tape & tp, const Array & g) {
    const Array & x = tp.value(ia);
    const Array & y = tp.value(ib);
    if (tp.needs_grad(ia)) {
      Array & ga = tp.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] / y[i];
      }
    }
    if (tp.needs_grad(ib)) {
      Array & gb = tp.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) {
        gb[i] -= g[i] * x[i] / (y[i] * y[i]);
      }
    }
  });
}

/// Repeats a 1 x c row vector `rows` times.
inline Var broadcast_rows(Var v, std::size_t rows)
{
  Tape & t = *v.tape();
  const Array & vv = v.value();
  if (vv.rows() != 1) {
    throw DimensionError("broadcast_rows: expected a 1xC row vector, got " + vv.shape_string());
  }
  const std::size_t c = vv.cols();
  Array out = Array::zeros(rows, c);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(vv.data().begin(), vv.data().end(), out.data().begin() + r * c);
  }
  const std::size_t iv = v.id();
  return t.record("broadcast_rows", std::move(out), {iv}, [iv, rows, c](Tape & tp, const Array & g) {
    Array & gv = tp.grad(iv);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < c; ++j) {
        gv[j] += g[r * c + j];
      }
    }
  });
}

inline Var concat_cols(const std::vector<Var> & parts)
{
  if (parts.empty()) {
    throw DimensionError("concat_cols: no operands");
  }
  Tape & t = *parts.front().tape();
  const std::size_t rows = parts.front().rows();
  std::size_t total = 0;
  std::vector<std::size_t> ids, widths;
  for (const auto & p : parts) {
    if (p.tape() != &t) {
      throw UsageError("concat_cols: operands must live on the same tape");
    }
    if (p.rows() != rows) {
      throw DimensionError(
        "concat_cols: row mismatch " + parts.front().value().shape_string() + " vs " +
        p.value().shape_string());
    }
    ids.push_back(p.id());
    widths.push_back(p.cols());
    total += p.cols();
  }
  Array out = Array::zeros(rows, total);
  for (std::size_t r = 0, off = 0; r < rows; ++r, off = 0) {
    for (std::size_t q = 0; q < parts.size(); ++q) {
      const Array & pv = parts[q].value();
      std::copy_n(pv.data().begin() + r * widths[q], widths[q], out.data().begin() + r * total + off);
      off += widths[q];
    }
  }
  return t.record("concat_cols", std::move(out), ids, [ids, widths, rows, total](Tape & tp, const Array & g) {
    std::size_t off = 0;
    for (std::size_t q = 0; q < ids.size(); ++q) {
      if (tp.needs_grad(ids[q])) {
        Array & gq = tp.grad(ids[q]);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < widths[q]; ++j) {
            gq[r * widths[q] + j] += g[r * total + off + j];
          }
        }
      }
      off += widths[q];
    }
  });
}

inline Var concat_rows(const std::vector<Var> & parts)
{
  if (parts.empty()) {
    throw DimensionError("concat_rows: no operands");
  }
  Tape & t = *parts.front().tape();
  const std::size_t cols = parts.front().cols();
  std::vector<std::size_t> ids, offsets;
  std::size_t rows = 0;
  for (const auto & p : parts) {
    if (p.tape() != &t) {
      throw UsageError("concat_rows: operands must live on the same tape");
    }
    if (p.cols() != cols) {
      throw DimensionError(
        "concat_rows: column mismatch " + parts.front().value().shape_string() + " vs " +
        p.value().shape_string());
    }
    ids.push_back(p.id());
    offsets.push_back(rows * cols);
    rows += p.rows();
  }
  Array out = Array::zeros(rows, cols);
  for (std::size_t q = 0; q < parts.size(); ++q) {
    const Array & pv = parts[q].value();
    std::copy(pv.data().begin(), pv.data().end(), out.data().begin() + offsets[q]);
  }
  return t.record("concat_rows", std::move(out), ids, [ids, offsets](Tape & tp, const Array & g) {
    for (std::size_t q = 0; q < ids.size(); ++q) {
      if (tp.needs_grad(ids[q])) {
        Array & gq = tp.grad(ids[q]);
        for (std::size_t i = 0; i < gq.size(); ++i) {
          gq[i] += g[offsets[q] + i];
        }
      }
    }
  });
}

/// Columns [begin, end).
inline Var slice_cols(Var a, std::size_t begin, std::size_t end)
{
  Tape & t = *a.tape();
  const Array & av = a.value();
  if (begin >= end || end > av.cols()) {
    throw DimensionError(
      "slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
      ") invalid for " + av.shape_string());
  }
  const std::size_t rows = av.rows(), cols = av.cols(), w = end - begin;
  Array out = Array::zeros(rows, w);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.data().begin() + r * cols + begin, w, out.data().begin() + r * w);
  }
  const std::size_t ia = a.id();
  return t.record("slice_cols", std::move(out), {ia}, [ia, rows, cols, begin, w](Tape & tp, const Array & g) {
    Array & ga = tp.grad(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < w; ++j) {
        ga[r * cols + begin + j] += g[r * w + j];
      }
    }
  });
}

/// Rows [begin, end).
inline Var slice_rows(Var a, std::size_t begin, std::size_t end)
{
  Tape & t = *a.tape();
  const Array & av = a.value();
  if (begin >= end || end > av.rows()) {
    throw DimensionError(
      "slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
      ") invalid for " + av.shape_string());
  }
  const std::size_t cols = av.cols();
  Array out = Array::zeros(end - begin, cols);
  std::copy(
    av.data().begin() + begin * cols, av.data().begin() + end * cols, out.data().begin());
  const std::size_t ia = a.id();
  return t.record("slice_rows", std::move(out), {ia}, [ia, begin, cols](Tape & tp, const Array & g) {
    Array & ga = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[begin * cols + i] += g[i];
    }
  });
}

/// out[r] = a[index[r]]; the adjoint scatter-adds.
inline Var gather_rows(Var a, std::vector<std::size_t> index)
{
  Tape & t = *a.tape();
  const Array & av = a.value();
  const std::size_t cols = av.cols();
  Array out = Array::zeros(index.size(), cols);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= av.rows()) {
      throw DimensionError(
        "gather_rows: index " + std::to_string(index[r]) + " out of range for " +
        av.shape_string());
    }
    std::copy_n(av.data().begin() + index[r] * cols, cols, out.data().begin() + r * cols);
  }
  const std::size_t ia = a.id();
  return t.record("gather_rows", std::move(out), {ia}, [ia, cols, index = std::move(index)](Tape & tp, const Array & g) {
    Array & ga = tp.grad(ia);
    for (std::size_t r = 0; r < index.size(); ++r) {
      for (std::size_t j = 0; j < cols; ++j) {
        ga[index[r] * cols + j] += g[r * cols + j];
      }
    }
  });
}

inline Var transpose(Var a)
{
  Tape & t = *a.tape();
  const Array & av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Array out = Array::zeros(n, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out[j * m + i] = av[i * n + j];
    }
  }
  const std::size_t ia = a.id();
  return t.record("transpose", std::move(out), {ia}, [ia, m, n](Tape & tp, const Array & g) {
    Array & ga = tp.grad(ia);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        ga[i * n + j] += g[j * m + i];
      }
    }
  });
}

inline Var reshape(Var a, std::size_t rows, std::size_t cols)
{
  Tape & t = *a.tape();
  const Array & av = a.value();
  if (rows * cols != av.size()) {
    throw DimensionError(
      "reshape: cannot view " + av.shape_string() + " as [" + std::to_string(rows) + "x" +
      std::to_string(cols) + "]");
  }
  Array out({rows, cols}, av.values());
  const std::size_t ia = a.id();
  return t.record("reshape", std::move(out), {ia}, [ia](Tape & tp, const Array & g) {
    detail::axpy(tp.grad(ia), g);
  });
}

inline Var sum(Var a)
{
  Tape & t = *a.tape();
  const Array & av = a.value();
  double s = 0.0;
  for (double v : av.data()) {
    s += v;
  }
  const std::size_t ia = a.id();
  return t.record("sum", Array::scalar(s), {ia}, [ia](Tape & tp, const Array & g) {
    Array & ga = tp.grad(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      ga[i] += g[0];
    }
  });
}

inline Var mean(Var a)
{
  Tape & t = *a.tape();
  const Array & av = a.value();
  if (av.size() == 0) {
    throw DimensionError("mean: empty operand");
  }
  double s = 0.0;
  for (double v : av.data()) {
    s += v;
  }
  const double n = static_cast<double>(av.size());
  const std::size_t ia = a.id();
  return t.record("mean", Array::scalar(s / n), {ia}, [ia, n](Tape & tp, const Array & g) {
    Array & ga = tp.grad(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      ga[i] += g[0] / n;
    }
  });
}

/// axis 0 sums over rows (1 x c result); axis 1 sums over columns (r x 1 result).
inline Var sum_axis(Var a, int axis)
{
  Tape & t = *a.tape();
  const Array & av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  if (axis != 0 && axis != 1) {
    throw DimensionError("sum_axis: axis must be 0 or 1");
  }
  Array out = axis == 0 ? Array::zeros(1, n) : Array::zeros(m, 1);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out[axis == 0 ? j : i] += av[i * n + j];
    }
  }
  const std::size_t ia = a.id();
  return t.record("sum_axis", std::move(out), {ia}, [ia, m, n, axis](Tape & tp, const Array & g) {
    Array & ga = tp.grad(ia);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        ga[i * n + j] += g[axis == 0 ? j : i];
      }
    }
  });
}

inline Var mean_axis(Var a, int axis)
{
  Tape & t = *a.tape();
  const Array & av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  if (axis != 0 && axis != 1) {
    throw DimensionError("mean_axis: axis must be 0 or 1");
  }
  const double d = static_cast<double>(axis == 0 ? m : n);
  Array out = axis == 0 ? Array::zeros(1, n) : Array::zeros(m, 1);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out[axis == 0 ? j : i] += av[i * n + j];
    }
  }
  for (auto & v : out.data()) {
    v /= d;
  }
  const std::size_t ia = a.id();
  return t.record("mean_axis", std::move(out), {ia}, [ia, m, n, axis, d](Tape & tp, const Array & g) {
    Array & ga = tp.grad(ia);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        ga[i * n + j] += g[axis == 0 ? j : i] / d;
      }
    }
  });
}

inline Var exp(Var a)
{
  return detail::unary(
    "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(Var a)
{
  for (std::size_t i = 0; i < a.value().size(); ++i) {
    if (!(a.value()[i] > 0.0)) {
      throw DomainError(
        "log: non-positive argument " + format_double(a.value()[i]) + " at flat index " +
        std::to_string(i));
    }
  }
  return detail::unary(
    "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var sigmoid(Var a)
{
  return detail::unary(
    "sigmoid", a,
    [](double x) {
      if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
      }
      const double e = std::exp(x);
      return e / (1.0 + e);
    },
    [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh(Var a)
{
  return detail::unary(
    "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var square(Var a)
{
  return detail::unary(
    "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Var scale(Var a, double c)
{
  return detail::unary(
    "scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

inline Var add_scalar(Var a, double c)
{
  return detail::unary(
    "add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

/// Row-wise softmax with max subtraction.
inline Var softmax_rows(Var a)
{
  Tape & t = *a.tape();
  const Array & av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Array out = Array::zeros(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double * x = av.data().data() + i * n;
    double * y = out.data().data() + i * n;
    const double mx = *std::max_element(x, x + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      s += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) {
      y[j] /= s;
    }
  }
  const std::size_t ia = a.id();
  std::size_t self = t.size();
  return t.record("softmax_rows", std::move(out), {ia}, [ia, self, m, n](Tape & tp, const Array & g) {
    const Array & y = tp.value(self);
    Array & ga = tp.grad(ia);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        dot += g[i * n + j] * y[i * n + j];
      }
      for (std::size_t j = 0; j < n; ++j) {
        ga[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
      }
    }
  });
}

/// Row-wise log-softmax (x - logsumexp(x)).
inline Var log_softmax_rows(Var a)
{
  Tape & t = *a.tape();
  const Array & av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Array out = Array::zeros(m, n);
  Array probs = Array::zeros(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double * x = av.data().data() + i * n;
    const double mx = *std::max_element(x, x + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      s += std::exp(x[j] - mx);
    }
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = x[j] - lse;
      probs[i * n + j] = std::exp(x[j] - lse);
    }
  }
  const std::size_t ia = a.id();
  return t.record(
    "log_softmax_rows", std::move(out), {ia},
    [ia, m, n, probs = std::move(probs)](Tape & tp, const Array & g) {
      Array & ga = tp.grad(ia);
      for (std::size_t i = 0; i < m; ++i) {
        double gs = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          gs += g[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) {
          ga[i * n + j] += g[i * n + j] - probs[i * n + j] * gs;
        }
      }
    });
}

/// Divides each row by its Euclidean norm. Zero rows pass through unchanged
/// (identity adjoint) and raise a warning.
inline Var l2_normalize_rows(Var a)
{
  Tape & t = *a.tape();
  const Array & av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Array out = Array::zeros(m, n);
  std::vector<double> norms(m, 0.0);
  std::size_t zero_rows = 0;
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      s += av[i * n + j] * av[i * n + j];
    }
    norms[i] = std::sqrt(s);
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = norms[i] > 0.0 ? av[i * n + j] / norms[i] : av[i * n + j];
    }
    zero_rows += norms[i] > 0.0 ? 0 : 1;
  }
  if (zero_rows > 0) {
    logging::warn(
      "l2_normalize_rows: " + std::to_string(zero_rows) +
      " zero-norm row(s) passed through unnormalized");
  }
  const std::size_t ia = a.id();
  std::size_t self = t.size();
  return t.record(
    "l2_normalize_rows", std::move(out), {ia},
    [ia, self, m, n, norms = std::move(norms)](Tape & tp, const Array & g) {
      const Array & y = tp.value(self);
      Array & ga = tp.grad(ia);
      for (std::size_t i = 0; i < m; ++i) {
        if (norms[i] == 0.0) {
          for (std::size_t j = 0; j < n; ++j) {
            ga[i * n + j] += g[i * n + j];
          }
          continue;
        }
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          dot += y[i * n + j] * g[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) {
          ga[i * n + j] += (g[i * n + j] - y[i * n + j] * dot) / norms[i];
        }
      }
    });
}

/// Attention scores within contiguous row groups of size `group`:
/// out[r, j] = q[r] . k[group_start(r) + j]. Result is rows x group.
inline Var grouped_scores(Var q, Var k, std::size_t group)
{
  Tape & t = detail::same_tape("grouped_scores", q, k);
  const Array & qv = q.value();
  const Array & kv = k.value();
  detail::require_same_shape("grouped_scores", qv, kv);
  const std::size_t rows = qv.rows(), d = qv.cols();
  if (group == 0 || rows % group != 0) {
    throw DimensionError(
      "grouped_scores: " + std::to_string(rows) + " rows not divisible into groups of " +
      std::to_string(group));
  }
  Array out = Array::zeros(rows, group);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = (r / group) * group;
    for (std::size_t j = 0; j < group; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        s += qv[r * d + c] * kv[(base + j) * d + c];
      }
      out[r * group + j] = s;
    }
  }
  const std::size_t iq = q.id(), ik = k.id();
  return t.record("grouped_scores", std::move(out), {iq, ik}, [iq, ik, rows, d, group](Tape & tp, const Array & g) {
    const Array & qv2 = tp.value(iq);
    const Array & kv2 = tp.value(ik);
    const bool gq = tp.needs_grad(iq), gk = tp.needs_grad(ik);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = (r / group) * group;
      for (std::size_t j = 0; j < group; ++j) {
        const double gr = g[r * group + j];
        if (gr == 0.0) {
          continue;
        }
        for (std::size_t c = 0; c < d; ++c) {
          if (gq) {
            tp.grad(iq)[r * d + c] += gr * kv2[(base + j) * d + c];
          }
          if (gk) {
            tp.grad(ik)[(base + j) * d + c] += gr * qv2[r * d + c];
          }
        }
      }
    }
  });
}

/// Weighted mix of values within row groups: out[r] = sum_j p[r, j] v[group_start(r) + j].
inline Var grouped_mix(Var p, Var v, std::size_t group)
{
  Tape & t = detail::same_tape("grouped_mix", p, v);
  const Array & pv = p.value();
  const Array & vv = v.value();
  const std::size_t rows = vv.rows(), d = vv.cols();
  if (pv.rows() != rows || pv.cols() != group || group == 0 || rows % group != 0) {
    throw DimensionError(
      "grouped_mix: weights " + pv.shape_string() + " incompatible with values " +
      vv.shape_string() + " in groups of " + std::to_string(group));
  }
  Array out = Array::zeros(rows, d);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = (r / group) * group;
    for (std::size_t j = 0; j < group; ++j) {
      const double w = pv[r * group + j];
      for (std::size_t c = 0; c < d; ++c) {
        out[r * d + c] += w * vv[(base + j) * d + c];
      }
    }
  }
  const std::size_t ip = p.id(), iv = v.id();
  return t.record("grouped_mix", std::move(out), {ip, iv}, [ip, iv, rows, d, group](Tape & tp, const Array & g) {
    const Array & pv2 = tp.value(ip);
    const Array & vv2 = tp.value(iv);
    const bool gp = tp.needs_grad(ip), gv = tp.needs_grad(iv);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = (r / group) * group;
      for (std::size_t j = 0; j < group; ++j) {
        double acc = 0.0;
        const double w = pv2[r * group + j];
        for (std::size_t c = 0; c < d; ++c) {
          acc += g[r * d + c] * vv2[(base + j) * d + c];
          if (gv) {
            tp.grad(iv)[(base + j) * d + c] += w * g[r * d + c];
          }
        }
        if (gp) {
          tp.grad(ip)[r * group + j] += acc;
        }
      }
    }
  });
}

// Convenience compositions (not primitives).

inline Var add_const(Var a, const Array & c) { return add(a, a.tape()->constant(c)); }
inline Var mul_const(Var a, const Array & c) { return mul(a, a.tape()->constant(c)); }
inline Var one_minus(Var a) { return add_scalar(scale(a, -1.0), 1.0); }

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

struct GradCheckReport
{
  double max_rel_err = 0.0;
  bool pass = true;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::string failure;
};

/// Scalar function of a list of parameter leaves.
using ScalarFn = std::function<Var(Tape &, const std::vector<Var> &)>;

namespace detail
{
inline double evaluate_scalar(const ScalarFn & f, const std::vector<Array> & theta)
{
  Tape tape(false);
  std::vector<Var> leaves;
  leaves.reserve(theta.size());
  for (const auto & th : theta) {
    leaves.push_back(tape.leaf(th));
  }
  return f(tape, leaves).item();
}
}  // namespace detail

/// Compares reverse-mode gradients of `f` at `theta` with central differences.
/// Relative error per coordinate is |a - n| / max(1e-8, |a| + |n|).
/// `stride` > 1 checks every stride-th coordinate of each parameter.
inline GradCheckReport grad_check(
  const ScalarFn & f, const std::vector<Array> & theta, double h = 1e-5, double tol = 1e-4,
  std::size_t stride = 1)
{
  GradCheckReport report;
  std::vector<Array> analytic;
  try {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto & th : theta) {
      leaves.push_back(tape.leaf(th));
    }
    Var out = f(tape, leaves);
    if (!std::isfinite(out.item())) {
      throw NumericError("non-finite objective");
    }
    tape.backward(out);
    for (const auto & l : leaves) {
      analytic.push_back(tape.gradient(l));
    }
  } catch (const std::exception & e) {
    report.pass = false;
    report.failure = std::string("analytic pass failed: ") + e.what();
    return report;
  }

  std::vector<Array> work = theta;
  for (std::size_t p = 0; p < theta.size(); ++p) {
    for (std::size_t i = 0; i < theta[p].size(); i += std::max<std::size_t>(stride, 1)) {
      const double orig = work[p][i];
      double fp = 0.0, fm = 0.0;
      try {
        work[p][i] = orig + h;
        fp = detail::evaluate_scalar(f, work);
        work[p][i] = orig - h;
        fm = detail::evaluate_scalar(f, work);
      } catch (const std::exception & e) {
        work[p][i] = orig;
        report.pass = false;
        report.worst_param = p;
        report.worst_index = i;
        report.failure = "evaluation failed at param " + std::to_string(p) + " index " +
                         std::to_string(i) + ": " + e.what();
        return report;
      }
      work[p][i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        report.pass = false;
        report.worst_param = p;
        report.worst_index = i;
        report.failure = "non-finite objective at param " + std::to_string(p) + " index " +
                         std::to_string(i);
        return report;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[p][i];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      ++report.checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = p;
        report.worst_index = i;
      }
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace mtraj

#endif  // MTRAJ__NUMERICS_HPP_
