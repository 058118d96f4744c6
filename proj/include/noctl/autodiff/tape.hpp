#pragma once

// Reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every operation as a node holding its primal value. Node
// operands always precede the node itself, so the record is a DAG in
// topological order and the reverse sweep is a single backward pass. Scalars
// are 1x1 matrices and broadcast against any shape in the elementwise ops.
//
// A tape belongs to one worker. It is rebuilt per evaluation; there is no
// graph reuse.

#include <cstdint>
#include <string_view>
#include <vector>

#include "noctl/kernels.hpp"

namespace noctl::ad {

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Pow,
  Tanh,
  Exp,
  Log,
  Square,
  Abs,
  Affine,   // scale * a + shift
  Floor,    // max(a, shift)
  MatMul,   // a * b
  Dot,      // a * b^T (row-wise dot products)
  AddRow,   // a + broadcast row b
  Sum,      // all entries -> 1x1
  Cols,     // column gather
  Tile,     // [a a ... a]
};

std::string_view op_name(Op op);

class Tape;

// Handle to a node of a tape. Cheap to copy.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  // Value of a 1x1 node.
  double scalar() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value);
  Var leaf(double value);

  const Matrix& value(int id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }
  Op op(int id) const { return nodes_[id].op; }
  void clear();

  // Seeds d(root)/d(root) = 1 for a 1x1 root and sweeps every node before it.
  void backward(Var root);
  // Adjoint of a node after backward(); zero matrix of the node's shape if the
  // node does not influence the root.
  Matrix grad(Var v) const;

  // Node constructors; prefer the free functions below.
  Var unary(Op op, Var a, double scale = 1.0, double shift = 0.0);
  Var binary(Op op, Var a, Var b);
  Var cols(Var a, std::vector<int> index);
  Var tile(Var a, int reps);

 private:
  struct Node {
    Op op = Op::Leaf;
    int a = -1;
    int b = -1;
    double scale = 1.0;
    double shift = 0.0;
    std::vector<int> index;
    Matrix value;
  };

  Var push(Node node);
  void accumulate(int id, const Matrix& g);
  void propagate(int id, const Matrix& g);

  std::vector<Node> nodes_;
  std::vector<Matrix> adj_;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double c);
Var operator+(double c, Var a);
Var operator-(Var a, double c);
Var operator-(double c, Var a);
Var operator*(Var a, double c);
Var operator*(double c, Var a);
Var operator/(Var a, double c);
Var operator/(double c, Var a);

Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var pow(Var a, double p);
Var square(Var a);
Var abs(Var a);
Var floor_at(Var a, double lo);

Var matmul(Var a, Var b);
// a * b^T; for row vectors this is the dot product.
Var dot(Var a, Var b);
Var add_row(Var a, Var row);
Var sum(Var a);
Var mean(Var a);
Var cols(Var a, std::vector<int> index);
Var tile(Var a, int reps);

}  // namespace noctl::ad
