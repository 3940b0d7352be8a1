#pragma once

// Define-by-run reverse-mode differentiation over rank-2 dense arrays.
//
// A Tape records every primitive applied to its Vars. Calling backward() on a
// scalar root fills the adjoint of every reachable node with d(root)/d(node).
// A tape may be differentiated once; clear() it before recording again.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ngramgrad/error.hpp"
#include "ngramgrad/matrix.hpp"

namespace ngramgrad {

/// Inputs to log() are floored here so the graph never evaluates log(0).
inline constexpr double kLogFloor = 1e-12;

enum class Op : std::uint8_t {
  kLeaf,
  kParam,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kMin,
  kMatMul,
  kTanh,
  kSigmoid,
  kExp,
  kLog,
  kGather,
  kConcat,
  kSum,
  kSoftmax,
  kElement,
  kReshape,
  kScale,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kParam: return "param";
    case Op::kConstant: return "constant";
    case Op::kAdd: return "add";
    case Op::kSub: return "subtract";
    case Op::kMul: return "multiply";
    case Op::kDiv: return "divide";
    case Op::kMin: return "scalar-min";
    case Op::kMatMul: return "matmul";
    case Op::kTanh: return "tanh";
    case Op::kSigmoid: return "sigmoid";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kGather: return "gather-rows";
    case Op::kConcat: return "concat";
    case Op::kSum: return "sum";
    case Op::kSoftmax: return "softmax";
    case Op::kElement: return "element";
    case Op::kReshape: return "reshape";
    case Op::kScale: return "scale";
  }
  return "?";
}

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid until the tape is cleared.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix& value() const;
  const Matrix& adjoint() const;
  double item() const { return value().item(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

class Tape {
 public:
  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

  struct Node {
    Op op = Op::kConstant;
    bool needs_grad = false;
    std::uint32_t lhs = kNone;
    std::uint32_t rhs = kNone;
    Matrix value;
    Matrix adjoint;
    const Matrix* external_value = nullptr;
    Matrix* external_grad = nullptr;
    std::vector<std::uint32_t> inputs;
    std::vector<std::size_t> indices;
    double scalar = 0.0;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable leaf owning its value.
  Var leaf(Matrix value) {
    Node n;
    n.op = Op::kLeaf;
    n.needs_grad = true;
    n.value = std::move(value);
    return push(std::move(n));
  }

  /// Non-differentiable constant.
  Var constant(Matrix value) {
    Node n;
    n.op = Op::kConstant;
    n.value = std::move(value);
    return push(std::move(n));
  }
  Var constant(double v) { return constant(Matrix::scalar(v)); }

  /// Leaf that reads `value` in place and accumulates its adjoint into `grad`.
  /// Both must outlive the tape's use.
  Var param(const Matrix& value, Matrix& grad) {
    if (!value.same_shape(grad)) {
      throw Error("param: value " + value.shape() + " and gradient " + grad.shape() +
                  " differ in shape");
    }
    Node n;
    n.op = Op::kParam;
    n.needs_grad = true;
    n.external_value = &value;
    n.external_grad = &grad;
    return push(std::move(n));
  }

  const Matrix& value(std::uint32_t id) const {
    const Node& n = nodes_.at(id);
    return n.op == Op::kParam ? *n.external_value : n.value;
  }

  const Matrix& adjoint(std::uint32_t id) const {
    const Node& n = nodes_.at(id);
    if (n.op == Op::kParam) return *n.external_grad;
    if (!differentiated_) throw Error("adjoint requested before backward()");
    if (!n.needs_grad) throw Error("adjoint requested for a node without gradient");
    return n.adjoint;
  }

  std::size_t size() const { return nodes_.size(); }
  bool differentiated() const { return differentiated_; }

  void clear() {
    nodes_.clear();
    differentiated_ = false;
  }

  const Node& node(std::uint32_t id) const { return nodes_.at(id); }

  /// Records a new node; fails once the tape has been differentiated.
  Var push(Node&& n) {
    if (differentiated_) throw Error("stale tape: clear() before recording after backward()");
    if (nodes_.size() >= kNone) throw Error("tape is full");
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  void backward(Var root);

 private:
  Matrix& grad_sink(std::uint32_t id) {
    Node& n = nodes_[id];
    return n.op == Op::kParam ? *n.external_grad : n.adjoint;
  }
  void propagate(std::uint32_t id);

  std::vector<Node> nodes_;
  bool differentiated_ = false;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline const Matrix& Var::adjoint() const { return tape_->adjoint(id_); }

namespace detail {

inline Tape& same_tape(Var a, Var b, Op op) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
    throw Error(std::string(op_name(op)) + ": operands live on different tapes");
  }
  return *a.tape();
}

inline Tape& tape_of(Var a, Op op) {
  if (!a.valid()) throw Error(std::string(op_name(op)) + ": invalid operand");
  return *a.tape();
}

inline bool dims_conform(std::size_t x, std::size_t y) { return x == y || x == 1 || y == 1; }

// Strides that broadcast a rows x cols operand over a larger shape.
struct Strides {
  std::size_t row;
  std::size_t col;
};
inline Strides broadcast_strides(const Matrix& m) {
  return {m.rows() == 1 ? 0 : m.cols(), m.cols() == 1 ? std::size_t{0} : std::size_t{1}};
}

inline Tape::Node binary_node(Tape& tape, Op op, Var a, Var b) {
  Tape::Node n;
  n.op = op;
  n.lhs = a.id();
  n.rhs = b.id();
  n.needs_grad = tape.node(a.id()).needs_grad || tape.node(b.id()).needs_grad;
  return n;
}

inline Tape::Node unary_node(Tape& tape, Op op, Var a) {
  Tape::Node n;
  n.op = op;
  n.lhs = a.id();
  n.needs_grad = tape.node(a.id()).needs_grad;
  return n;
}

template <typename F>
Var elementwise(Op op, Var a, Var b, F f) {
  Tape& tape = same_tape(a, b, op);
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  if (!dims_conform(x.rows(), y.rows()) || !dims_conform(x.cols(), y.cols())) {
    throw Error(std::string(op_name(op)) + ": shape mismatch " + x.shape() + " vs " + y.shape());
  }
  const std::size_t rows = std::max(x.rows(), y.rows());
  const std::size_t cols = std::max(x.cols(), y.cols());
  Matrix out(rows, cols);
  const Strides sx = broadcast_strides(x);
  const Strides sy = broadcast_strides(y);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out(r, c) = f(x[r * sx.row + c * sx.col], y[r * sy.row + c * sy.col]);
    }
  }
  Tape::Node n = binary_node(tape, op, a, b);
  n.value = std::move(out);
  return tape.push(std::move(n));
}

template <typename F>
Var unary(Op op, Var a, F f) {
  Tape& tape = tape_of(a, op);
  Matrix out = a.value();
  for (double& v : out.flat()) v = f(v);
  Tape::Node n = unary_node(tape, op, a);
  n.value = std::move(out);
  return tape.push(std::move(n));
}

}  // namespace detail

// Elementwise binary primitives broadcast 1 x n rows, m x 1 columns and scalars.
inline Var add(Var a, Var b) {
  return detail::elementwise(Op::kAdd, a, b, [](double x, double y) { return x + y; });
}
inline Var sub(Var a, Var b) {
  return detail::elementwise(Op::kSub, a, b, [](double x, double y) { return x - y; });
}
inline Var mul(Var a, Var b) {
  return detail::elementwise(Op::kMul, a, b, [](double x, double y) { return x * y; });
}
inline Var div(Var a, Var b) {
  return detail::elementwise(Op::kDiv, a, b, [](double x, double y) { return x / y; });
}

/// Elementwise minimum. The adjoint goes to the smaller argument; ties go to `a`.
inline Var min(Var a, Var b) {
  return detail::elementwise(Op::kMin, a, b, [](double x, double y) { return x <= y ? x : y; });
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }

inline Var tanh(Var a) {
  return detail::unary(Op::kTanh, a, [](double x) { return std::tanh(x); });
}
inline Var sigmoid(Var a) {
  return detail::unary(Op::kSigmoid, a, [](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
}
inline Var exp(Var a) {
  return detail::unary(Op::kExp, a, [](double x) { return std::exp(x); });
}
inline Var log(Var a) {
  return detail::unary(Op::kLog, a, [](double x) { return std::log(std::max(x, kLogFloor)); });
}

/// Multiplies by a constant factor.
inline Var scale(Var a, double factor) {
  Tape& tape = detail::tape_of(a, Op::kScale);
  Matrix out = a.value();
  for (double& v : out.flat()) v *= factor;
  Tape::Node n = detail::unary_node(tape, Op::kScale, a);
  n.value = std::move(out);
  n.scalar = factor;
  return tape.push(std::move(n));
}

inline Var matmul(Var a, Var b) {
  Tape& tape = detail::same_tape(a, b, Op::kMatMul);
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  if (x.cols() != y.rows()) {
    throw Error("matmul: shape mismatch " + x.shape() + " vs " + y.shape());
  }
  const std::size_t m = x.rows();
  const std::size_t k = x.cols();
  const std::size_t n = y.cols();
  Matrix out(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x(i, p);
      const double* yrow = y.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += xv * yrow[j];
    }
  }
  Tape::Node node = detail::binary_node(tape, Op::kMatMul, a, b);
  node.value = std::move(out);
  return tape.push(std::move(node));
}

/// Rows `indices` of `table`, stacked in order.
inline Var gather_rows(Var table, std::span<const std::size_t> indices) {
  Tape& tape = detail::tape_of(table, Op::kGather);
  const Matrix& t = table.value();
  Matrix out(indices.size(), t.cols());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= t.rows()) {
      throw Error("gather-rows: index " + std::to_string(indices[k]) + " out of range for " +
                  t.shape());
    }
    std::copy_n(t.data() + indices[k] * t.cols(), t.cols(), out.data() + k * t.cols());
  }
  Tape::Node n = detail::unary_node(tape, Op::kGather, table);
  n.value = std::move(out);
  n.indices.assign(indices.begin(), indices.end());
  return tape.push(std::move(n));
}
inline Var gather_rows(Var table, std::initializer_list<std::size_t> indices) {
  return gather_rows(table, std::span<const std::size_t>(indices.begin(), indices.size()));
}

/// Concatenation along rows (axis 0) or columns (axis 1).
inline Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw Error("concat: no operands");
  if (axis != 0 && axis != 1) throw Error("concat: axis must be 0 or 1");
  Tape& tape = detail::tape_of(parts[0], Op::kConcat);
  const std::size_t fixed = axis == 0 ? parts[0].cols() : parts[0].rows();
  std::size_t total = 0;
  bool needs_grad = false;
  for (const Var& p : parts) {
    detail::same_tape(parts[0], p, Op::kConcat);
    const Matrix& v = p.value();
    if ((axis == 0 ? v.cols() : v.rows()) != fixed) {
      throw Error("concat: shape mismatch " + parts[0].value().shape() + " vs " + v.shape() +
                  " along axis " + std::to_string(axis));
    }
    total += axis == 0 ? v.rows() : v.cols();
    needs_grad = needs_grad || tape.node(p.id()).needs_grad;
  }
  Matrix out = axis == 0 ? Matrix(total, fixed) : Matrix(fixed, total);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    if (axis == 0) {
      std::copy_n(v.data(), v.size(), out.data() + offset * fixed);
      offset += v.rows();
    } else {
      for (std::size_t r = 0; r < fixed; ++r) {
        std::copy_n(v.data() + r * v.cols(), v.cols(), out.data() + r * total + offset);
      }
      offset += v.cols();
    }
  }
  Tape::Node n;
  n.op = Op::kConcat;
  n.needs_grad = needs_grad;
  n.value = std::move(out);
  n.scalar = axis;
  n.inputs.reserve(parts.size());
  for (const Var& p : parts) n.inputs.push_back(p.id());
  return tape.push(std::move(n));
}
inline Var concat(std::initializer_list<Var> parts, int axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

/// Sum of all elements, as a scalar.
inline Var sum(Var a) {
  Tape& tape = detail::tape_of(a, Op::kSum);
  double s = 0.0;
  for (double v : a.value().flat()) s += v;
  Tape::Node n = detail::unary_node(tape, Op::kSum, a);
  n.value = Matrix::scalar(s);
  return tape.push(std::move(n));
}

/// Row-wise softmax with max subtraction.
inline Var softmax(Var a) {
  Tape& tape = detail::tape_of(a, Op::kSoftmax);
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row_span(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      z += v;
    }
    for (double& v : row) v /= z;
  }
  Tape::Node n = detail::unary_node(tape, Op::kSoftmax, a);
  n.value = std::move(out);
  return tape.push(std::move(n));
}

/// The single element (r, c) as a scalar.
inline Var element(Var a, std::size_t r, std::size_t c) {
  Tape& tape = detail::tape_of(a, Op::kElement);
  const Matrix& v = a.value();
  if (r >= v.rows() || c >= v.cols()) {
    throw Error("element: (" + std::to_string(r) + "," + std::to_string(c) +
                ") out of range for " + v.shape());
  }
  Tape::Node n = detail::unary_node(tape, Op::kElement, a);
  n.value = Matrix::scalar(v(r, c));
  n.indices = {r * v.cols() + c};
  return tape.push(std::move(n));
}

inline Var reshape(Var a, std::size_t rows, std::size_t cols) {
  Tape& tape = detail::tape_of(a, Op::kReshape);
  const Matrix& v = a.value();
  if (rows * cols != v.size()) {
    throw Error("reshape: cannot view " + v.shape() + " as " + std::to_string(rows) + "x" +
                std::to_string(cols));
  }
  Tape::Node n = detail::unary_node(tape, Op::kReshape, a);
  n.value = Matrix(rows, cols, std::vector<double>(v.flat().begin(), v.flat().end()));
  return tape.push(std::move(n));
}

inline void Tape::backward(Var root) {
  if (root.tape() != this) throw Error("backward: root belongs to another tape");
  if (differentiated_) throw Error("stale tape: backward() already ran; clear() first");
  const Matrix& rv = value(root.id());
  if (!rv.is_scalar()) throw Error("backward: root must be scalar, got " + rv.shape());
  differentiated_ = true;
  for (Node& n : nodes_) {
    if (n.needs_grad && n.op != Op::kParam) {
      n.adjoint = Matrix(n.value.rows(), n.value.cols());
    }
  }
  if (!nodes_[root.id()].needs_grad) return;
  grad_sink(root.id())[0] += 1.0;
  for (std::uint32_t id = root.id() + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!n.needs_grad) continue;
    if (n.op == Op::kLeaf || n.op == Op::kParam || n.op == Op::kConstant) continue;
    propagate(id);
  }
}

inline void Tape::propagate(std::uint32_t id) {
  const Node& n = nodes_[id];
  const Matrix& g = n.adjoint;
  const Matrix& out = n.value;

  auto wants = [&](std::uint32_t parent) {
    return parent != kNone && nodes_[parent].needs_grad;
  };

  switch (n.op) {
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul:
    case Op::kDiv:
    case Op::kMin: {
      const Matrix& x = value(n.lhs);
      const Matrix& y = value(n.rhs);
      const detail::Strides sx = detail::broadcast_strides(x);
      const detail::Strides sy = detail::broadcast_strides(y);
      Matrix* gx = wants(n.lhs) ? &grad_sink(n.lhs) : nullptr;
      Matrix* gy = wants(n.rhs) ? &grad_sink(n.rhs) : nullptr;
      for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t c = 0; c < out.cols(); ++c) {
          const std::size_t ix = r * sx.row + c * sx.col;
          const std::size_t iy = r * sy.row + c * sy.col;
          const double gv = g(r, c);
          double dx = 0.0;
          double dy = 0.0;
          switch (n.op) {
            case Op::kAdd: dx = gv; dy = gv; break;
            case Op::kSub: dx = gv; dy = -gv; break;
            case Op::kMul: dx = gv * y[iy]; dy = gv * x[ix]; break;
            case Op::kDiv:
              dx = gv / y[iy];
              dy = -gv * x[ix] / (y[iy] * y[iy]);
              break;
            default:
              if (x[ix] <= y[iy]) dx = gv; else dy = gv;
              break;
          }
          if (gx) (*gx)[ix] += dx;
          if (gy) (*gy)[iy] += dy;
        }
      }
      break;
    }
    case Op::kMatMul: {
      const Matrix& x = value(n.lhs);
      const Matrix& y = value(n.rhs);
      const std::size_t m = x.rows();
      const std::size_t k = x.cols();
      const std::size_t cols = y.cols();
      if (wants(n.lhs)) {
        Matrix& gx = grad_sink(n.lhs);
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g.data() + i * cols;
          for (std::size_t p = 0; p < k; ++p) {
            const double* yrow = y.data() + p * cols;
            double acc = 0.0;
            for (std::size_t j = 0; j < cols; ++j) acc += grow[j] * yrow[j];
            gx(i, p) += acc;
          }
        }
      }
      if (wants(n.rhs)) {
        Matrix& gy = grad_sink(n.rhs);
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g.data() + i * cols;
          for (std::size_t p = 0; p < k; ++p) {
            const double xv = x(i, p);
            double* gyrow = gy.data() + p * cols;
            for (std::size_t j = 0; j < cols; ++j) gyrow[j] += xv * grow[j];
          }
        }
      }
      break;
    }
    case Op::kTanh: {
      Matrix& gx = grad_sink(n.lhs);
      for (std::size_t i = 0; i < out.size(); ++i) gx[i] += g[i] * (1.0 - out[i] * out[i]);
      break;
    }
    case Op::kSigmoid: {
      Matrix& gx = grad_sink(n.lhs);
      for (std::size_t i = 0; i < out.size(); ++i) gx[i] += g[i] * out[i] * (1.0 - out[i]);
      break;
    }
    case Op::kExp: {
      Matrix& gx = grad_sink(n.lhs);
      for (std::size_t i = 0; i < out.size(); ++i) gx[i] += g[i] * out[i];
      break;
    }
    case Op::kLog: {
      const Matrix& x = value(n.lhs);
      Matrix& gx = grad_sink(n.lhs);
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (x[i] > kLogFloor) gx[i] += g[i] / x[i];
      }
      break;
    }
    case Op::kScale: {
      Matrix& gx = grad_sink(n.lhs);
      for (std::size_t i = 0; i < out.size(); ++i) gx[i] += g[i] * n.scalar;
      break;
    }
    case Op::kGather: {
      Matrix& gt = grad_sink(n.lhs);
      const std::size_t cols = out.cols();
      for (std::size_t k = 0; k < n.indices.size(); ++k) {
        double* dst = gt.data() + n.indices[k] * cols;
        const double* src = g.data() + k * cols;
        for (std::size_t j = 0; j < cols; ++j) dst[j] += src[j];
      }
      break;
    }
    case Op::kConcat: {
      const bool rows_axis = n.scalar == 0.0;
      std::size_t offset = 0;
      for (std::uint32_t in : n.inputs) {
        const Matrix& v = value(in);
        if (wants(in)) {
          Matrix& gi = grad_sink(in);
          if (rows_axis) {
            for (std::size_t i = 0; i < v.size(); ++i) gi[i] += g[offset * v.cols() + i];
          } else {
            for (std::size_t r = 0; r < v.rows(); ++r) {
              for (std::size_t c = 0; c < v.cols(); ++c) gi(r, c) += g(r, offset + c);
            }
          }
        }
        offset += rows_axis ? v.rows() : v.cols();
      }
      break;
    }
    case Op::kSum: {
      Matrix& gx = grad_sink(n.lhs);
      const double gv = g[0];
      for (double& v : gx.flat()) v += gv;
      break;
    }
    case Op::kSoftmax: {
      Matrix& gx = grad_sink(n.lhs);
      for (std::size_t r = 0; r < out.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < out.cols(); ++c) dot += g(r, c) * out(r, c);
        for (std::size_t c = 0; c < out.cols(); ++c) gx(r, c) += out(r, c) * (g(r, c) - dot);
      }
      break;
    }
    case Op::kElement: {
      grad_sink(n.lhs)[n.indices[0]] += g[0];
      break;
    }
    case Op::kReshape: {
      Matrix& gx = grad_sink(n.lhs);
      for (std::size_t i = 0; i < out.size(); ++i) gx[i] += g[i];
      break;
    }
    case Op::kLeaf:
    case Op::kParam:
    case Op::kConstant:
      break;
  }
}

/// Max over coordinates of |analytic - central difference| /
/// max(|analytic|, |central difference|, 1e-8). `value_at` must be the function
/// whose gradient at `point` is `analytic`.
inline double grad_check(const std::function<double(const Matrix&)>& value_at,
                         const Matrix& analytic, const Matrix& point, double step) {
  if (!analytic.same_shape(point)) {
    throw Error("grad_check: gradient " + analytic.shape() + " does not match point " +
                point.shape());
  }
  double worst = 0.0;
  Matrix probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + step;
    const double up = value_at(probe);
    probe[i] = point[i] - step;
    const double down = value_at(probe);
    probe[i] = point[i];
    if (!std::isfinite(up) || !std::isfinite(down) || !std::isfinite(analytic[i])) {
      throw Error("grad_check: non-finite value at coordinate " + std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

/// Gradient check of a scalar graph built by `fn` from a leaf holding `point`.
inline double grad_check(const std::function<Var(Tape&, Var)>& fn, const Matrix& point,
                         double step) {
  Matrix analytic;
  {
    Tape tape;
    Var x = tape.leaf(point);
    Var y = fn(tape, x);
    tape.backward(y);
    analytic = x.adjoint();
  }
  auto value_at = [&fn](const Matrix& p) {
    Tape tape;
    Var x = tape.leaf(p);
    return fn(tape, x).item();
  };
  return grad_check(value_at, analytic, point, step);
}

}  // namespace ngramgrad
