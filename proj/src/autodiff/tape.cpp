#include "noctl/autodiff/tape.hpp"

#include <cmath>
#include <string>

#include "noctl/errors.hpp"

namespace noctl::ad {
namespace {

bool is_scalar(const Matrix& m) { return m.rows() == 1 && m.cols() == 1; }

// Reduce an adjoint to the shape of a possibly-broadcast operand.
Matrix reduce_to(const Matrix& g, const Matrix& operand) {
  if (is_scalar(operand) && !is_scalar(g)) return Matrix::Constant(1, 1, g.sum());
  return g;
}

Tape* same_tape(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape())
    throw ArgumentError("operands belong to different tapes");
  return a.tape();
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Pow: return "pow";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Square: return "square";
    case Op::Abs: return "abs";
    case Op::Affine: return "affine";
    case Op::Floor: return "floor";
    case Op::MatMul: return "matmul";
    case Op::Dot: return "dot";
    case Op::AddRow: return "add_row";
    case Op::Sum: return "sum";
    case Op::Cols: return "cols";
    case Op::Tile: return "tile";
  }
  return "?";
}

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (!is_scalar(v)) throw ArgumentError("scalar() on a non-scalar node");
  return v(0, 0);
}

Var Tape::leaf(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::leaf(double value) { return leaf(Matrix::Constant(1, 1, value)); }

void Tape::clear() {
  nodes_.clear();
  adj_.clear();
}

Var Tape::push(Node node) {
  const int id = static_cast<int>(nodes_.size());
  if (!node.value.allFinite())
    throw EvaluationError(id, std::string("non-finite value in ") + std::string(op_name(node.op)));
  nodes_.push_back(std::move(node));
  return Var(this, id);
}

Var Tape::unary(Op op, Var a, double scale, double shift) {
  if (a.tape() != this) throw ArgumentError("operand belongs to another tape");
  const Matrix& x = a.value();
  const int id = static_cast<int>(nodes_.size());
  Node n;
  n.op = op;
  n.a = a.id();
  n.scale = scale;
  n.shift = shift;
  switch (op) {
    case Op::Pow:
      if (scale != std::floor(scale) && (x.array() < 0.0).any())
        throw EvaluationError(id, "pow of negative base with non-integer exponent");
      if (scale < 0.0 && (x.array() == 0.0).any()) throw EvaluationError(id, "pow of zero with negative exponent");
      n.value = x.array().pow(scale).matrix();
      break;
    case Op::Tanh: n.value = x.array().tanh().matrix(); break;
    case Op::Exp: n.value = x.array().exp().matrix(); break;
    case Op::Log:
      if ((x.array() <= 0.0).any()) throw EvaluationError(id, "log of non-positive value");
      n.value = x.array().log().matrix();
      break;
    case Op::Square: n.value = x.array().square().matrix(); break;
    case Op::Abs: n.value = x.array().abs().matrix(); break;
    case Op::Affine: n.value = (scale * x.array() + shift).matrix(); break;
    case Op::Floor: n.value = x.array().max(shift).matrix(); break;
    case Op::Sum: n.value = Matrix::Constant(1, 1, x.sum()); break;
    default: throw ArgumentError("not a unary op: " + std::string(op_name(op)));
  }
  return push(std::move(n));
}

Var Tape::binary(Op op, Var a, Var b) {
  if (a.tape() != this || b.tape() != this) throw ArgumentError("operand belongs to another tape");
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  const int id = static_cast<int>(nodes_.size());
  Node n;
  n.op = op;
  n.a = a.id();
  n.b = b.id();
  auto elementwise = [&](auto&& f) {
    if (x.rows() == y.rows() && x.cols() == y.cols()) {
      n.value = f(x.array(), y.array()).matrix();
    } else if (is_scalar(y)) {
      n.value = f(x.array(), Matrix::Constant(x.rows(), x.cols(), y(0, 0)).array()).matrix();
    } else if (is_scalar(x)) {
      n.value = f(Matrix::Constant(y.rows(), y.cols(), x(0, 0)).array(), y.array()).matrix();
    } else {
      throw ArgumentError(std::string(op_name(op)) + ": shape mismatch " + std::to_string(x.rows()) + "x" +
                          std::to_string(x.cols()) + " vs " + std::to_string(y.rows()) + "x" +
                          std::to_string(y.cols()));
    }
  };
  switch (op) {
    case Op::Add: elementwise([](const auto& p, const auto& q) { return (p + q).eval(); }); break;
    case Op::Sub: elementwise([](const auto& p, const auto& q) { return (p - q).eval(); }); break;
    case Op::Mul: elementwise([](const auto& p, const auto& q) { return (p * q).eval(); }); break;
    case Op::Div:
      if ((y.array() == 0.0).any()) throw EvaluationError(id, "division by zero");
      elementwise([](const auto& p, const auto& q) { return (p / q).eval(); });
      break;
    case Op::MatMul: n.value = kernels::gemm_nn(x, y); break;
    case Op::Dot: n.value = kernels::gemm_nt(x, y); break;
    case Op::AddRow:
      if (y.rows() != 1 || y.cols() != x.cols()) throw ArgumentError("add_row: row shape mismatch");
      n.value = x.rowwise() + y.row(0);
      break;
    default: throw ArgumentError("not a binary op: " + std::string(op_name(op)));
  }
  return push(std::move(n));
}

Var Tape::cols(Var a, std::vector<int> index) {
  if (a.tape() != this) throw ArgumentError("operand belongs to another tape");
  const Matrix& x = a.value();
  Node n;
  n.op = Op::Cols;
  n.a = a.id();
  n.value.resize(x.rows(), static_cast<Eigen::Index>(index.size()));
  for (std::size_t j = 0; j < index.size(); ++j) {
    if (index[j] < 0 || index[j] >= x.cols()) throw ArgumentError("cols: index out of range");
    n.value.col(static_cast<Eigen::Index>(j)) = x.col(index[j]);
  }
  n.index = std::move(index);
  return push(std::move(n));
}

Var Tape::tile(Var a, int reps) {
  if (a.tape() != this) throw ArgumentError("operand belongs to another tape");
  if (reps < 1) throw ArgumentError("tile: reps must be >= 1");
  Node n;
  n.op = Op::Tile;
  n.a = a.id();
  n.value = a.value().replicate(1, reps);
  return push(std::move(n));
}

void Tape::accumulate(int id, const Matrix& g) {
  Matrix& slot = adj_[id];
  if (slot.size() == 0)
    slot = g;
  else
    slot += g;
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw ArgumentError("backward: root belongs to another tape");
  if (!is_scalar(root.value())) throw ArgumentError("backward: root must be 1x1");
  adj_.assign(nodes_.size(), Matrix());
  adj_[root.id()] = Matrix::Constant(1, 1, 1.0);
  for (int id = root.id(); id >= 0; --id) {
    if (adj_[id].size() == 0 || nodes_[id].op == Op::Leaf) continue;
    propagate(id, adj_[id]);
  }
}

void Tape::propagate(int id, const Matrix& g) {
  const Node& n = nodes_[id];
  const Matrix& out = n.value;
  switch (n.op) {
    case Op::Leaf: return;
    case Op::Add:
      accumulate(n.a, reduce_to(g, nodes_[n.a].value));
      accumulate(n.b, reduce_to(g, nodes_[n.b].value));
      return;
    case Op::Sub:
      accumulate(n.a, reduce_to(g, nodes_[n.a].value));
      accumulate(n.b, reduce_to(-g, nodes_[n.b].value));
      return;
    case Op::Mul:
    case Op::Div: {
      const Matrix& x = nodes_[n.a].value;
      const Matrix& y = nodes_[n.b].value;
      // Multiply g by an operand, broadcasting a 1x1 operand.
      auto times = [&](const Matrix& m) -> Matrix {
        if (is_scalar(m) && !is_scalar(g)) return g * m(0, 0);
        return (g.array() * m.array()).matrix();
      };
      auto over = [&](const Matrix& m) -> Matrix {
        if (is_scalar(m) && !is_scalar(g)) return g / m(0, 0);
        return (g.array() / m.array()).matrix();
      };
      if (n.op == Op::Mul) {
        accumulate(n.a, reduce_to(times(y), x));
        accumulate(n.b, reduce_to(times(x), y));
      } else {
        const Matrix gq = over(y);
        accumulate(n.a, reduce_to(gq, x));
        accumulate(n.b, reduce_to((-gq.array() * out.array()).matrix(), y));
      }
      return;
    }
    case Op::Pow: {
      const Matrix& x = nodes_[n.a].value;
      accumulate(n.a, (g.array() * n.scale * x.array().pow(n.scale - 1.0)).matrix());
      return;
    }
    case Op::Tanh: accumulate(n.a, (g.array() * (1.0 - out.array().square())).matrix()); return;
    case Op::Exp: accumulate(n.a, (g.array() * out.array()).matrix()); return;
    case Op::Log: accumulate(n.a, (g.array() / nodes_[n.a].value.array()).matrix()); return;
    case Op::Square: accumulate(n.a, (2.0 * g.array() * nodes_[n.a].value.array()).matrix()); return;
    case Op::Abs:
      // Right derivative at the kink.
      accumulate(n.a, (nodes_[n.a].value.array() >= 0.0).select(g, -g).matrix());
      return;
    case Op::Affine: accumulate(n.a, n.scale * g); return;
    case Op::Floor:
      accumulate(n.a, (nodes_[n.a].value.array() > n.shift).select(g, 0.0).matrix());
      return;
    case Op::MatMul:
      accumulate(n.a, kernels::gemm_nt(g, nodes_[n.b].value));
      accumulate(n.b, kernels::gemm_tn(nodes_[n.a].value, g));
      return;
    case Op::Dot:
      accumulate(n.a, kernels::gemm_nn(g, nodes_[n.b].value));
      accumulate(n.b, kernels::gemm_tn(g, nodes_[n.a].value));
      return;
    case Op::AddRow:
      accumulate(n.a, g);
      accumulate(n.b, g.colwise().sum());
      return;
    case Op::Sum: {
      const Matrix& x = nodes_[n.a].value;
      accumulate(n.a, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
      return;
    }
    case Op::Cols: {
      const Matrix& x = nodes_[n.a].value;
      Matrix ga = Matrix::Zero(x.rows(), x.cols());
      for (std::size_t j = 0; j < n.index.size(); ++j) ga.col(n.index[j]) += g.col(static_cast<Eigen::Index>(j));
      accumulate(n.a, ga);
      return;
    }
    case Op::Tile: {
      const Eigen::Index c = nodes_[n.a].value.cols();
      Matrix ga = g.leftCols(c);
      for (Eigen::Index k = c; k < g.cols(); k += c) ga += g.middleCols(k, c);
      accumulate(n.a, ga);
      return;
    }
  }
}

Matrix Tape::grad(Var v) const {
  if (v.tape() != this) throw ArgumentError("grad: variable belongs to another tape");
  if (static_cast<std::size_t>(v.id()) >= adj_.size() || adj_[v.id()].size() == 0)
    return Matrix::Zero(v.rows(), v.cols());
  return adj_[v.id()];
}

Var operator+(Var a, Var b) { return same_tape(a, b)->binary(Op::Add, a, b); }
Var operator-(Var a, Var b) { return same_tape(a, b)->binary(Op::Sub, a, b); }
Var operator*(Var a, Var b) { return same_tape(a, b)->binary(Op::Mul, a, b); }
Var operator/(Var a, Var b) { return same_tape(a, b)->binary(Op::Div, a, b); }
Var operator-(Var a) { return a.tape()->unary(Op::Affine, a, -1.0, 0.0); }
Var operator+(Var a, double c) { return a.tape()->unary(Op::Affine, a, 1.0, c); }
Var operator+(double c, Var a) { return a + c; }
Var operator-(Var a, double c) { return a.tape()->unary(Op::Affine, a, 1.0, -c); }
Var operator-(double c, Var a) { return a.tape()->unary(Op::Affine, a, -1.0, c); }
Var operator*(Var a, double c) { return a.tape()->unary(Op::Affine, a, c, 0.0); }
Var operator*(double c, Var a) { return a * c; }
Var operator/(Var a, double c) {
  if (c == 0.0) throw EvaluationError(static_cast<int>(a.tape()->size()), "division by zero");
  return a.tape()->unary(Op::Affine, a, 1.0 / c, 0.0);
}
Var operator/(double c, Var a) { return c * pow(a, -1.0); }

Var tanh(Var a) { return a.tape()->unary(Op::Tanh, a); }
Var exp(Var a) { return a.tape()->unary(Op::Exp, a); }
Var log(Var a) { return a.tape()->unary(Op::Log, a); }
Var pow(Var a, double p) { return a.tape()->unary(Op::Pow, a, p); }
Var square(Var a) { return a.tape()->unary(Op::Square, a); }
Var abs(Var a) { return a.tape()->unary(Op::Abs, a); }
Var floor_at(Var a, double lo) { return a.tape()->unary(Op::Floor, a, 1.0, lo); }

Var matmul(Var a, Var b) { return same_tape(a, b)->binary(Op::MatMul, a, b); }
Var dot(Var a, Var b) { return same_tape(a, b)->binary(Op::Dot, a, b); }
Var add_row(Var a, Var row) { return same_tape(a, row)->binary(Op::AddRow, a, row); }
Var sum(Var a) { return a.tape()->unary(Op::Sum, a); }
Var mean(Var a) { return sum(a) * (1.0 / static_cast<double>(a.value().size())); }
Var cols(Var a, std::vector<int> index) { return a.tape()->cols(a, std::move(index)); }
Var tile(Var a, int reps) { return a.tape()->tile(a, reps); }

}  // namespace noctl::ad
