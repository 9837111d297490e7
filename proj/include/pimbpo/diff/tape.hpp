#pragma once

#include "pimbpo/diff/errors.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pimbpo::ad {

using Matrix = Eigen::MatrixXd;

/// Raised by backward() when a forward value on the tape is not finite.
class PropagationError : public std::runtime_error {
public:
  PropagationError(int node, const std::string &what)
      : std::runtime_error(what), node_(node) {}
  [[nodiscard]] int node() const { return node_; }

private:
  int node_;
};

enum class OpKind : std::uint8_t {
  Leaf,
  Constant,
  MatMul,
  Transpose,
  Add,
  Sub,
  Neg,
  Mul,
  AddRow,
  Scale,
  AddScalar,
  Tanh,
  Sin,
  Cos,
  Exp,
  Reciprocal,
  Square,
  Sum,
  Mean,
  Cols,
  HCat,
};

const char *op_name(OpKind kind);

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
/// References returned by value() are invalidated when the tape grows.
class Var {
public:
  Var() = default;
  Var(Tape *tape, int index) : tape_(tape), index_(index) {}

  [[nodiscard]] Tape *tape() const { return tape_; }
  [[nodiscard]] int index() const { return index_; }
  [[nodiscard]] bool valid() const { return tape_ != nullptr && index_ >= 0; }
  [[nodiscard]] const Matrix &value() const;
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  [[nodiscard]] double scalar() const;

private:
  Tape *tape_ = nullptr;
  int index_ = -1;
};

/// Adjoints produced by Tape::backward. Nodes that do not influence the
/// output report a zero matrix of the node's shape.
class Gradients {
public:
  Gradients(const Tape *tape, std::vector<Matrix> adjoints)
      : tape_(tape), adjoints_(std::move(adjoints)) {}

  [[nodiscard]] Matrix operator[](Var v) const;

private:
  const Tape *tape_;
  std::vector<Matrix> adjoints_;
};

/// Append-only record of matrix-valued operations. Nodes are stored in
/// creation order, which is a valid topological order.
class Tape {
public:
  Tape() { nodes_.reserve(256); }
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  /// Differentiable leaf (parameters, inputs that need tangents).
  Var variable(Matrix value);
  Var variable(double value);
  /// Leaf that never receives an adjoint.
  Var constant(Matrix value);
  Var constant(double value);

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] const Matrix &value(int index) const { return nodes_.at(index).value; }
  [[nodiscard]] OpKind kind(int index) const { return nodes_.at(index).kind; }
  [[nodiscard]] bool is_leaf(Var v) const;
  [[nodiscard]] bool needs_grad(int index) const { return nodes_.at(index).needs_grad; }

  struct NodeInfo {
    OpKind kind;
    int a;
    int b;
    double k;
    Eigen::Index i0;
    Eigen::Index i1;
  };
  [[nodiscard]] NodeInfo info(int index) const;

  /// Reverse sweep from a scalar output.
  [[nodiscard]] Gradients backward(Var output) const;

  /// Recomputes every non-leaf node from its parents and reports whether
  /// all cached values are reproduced exactly.
  [[nodiscard]] bool verify_replay() const;

  // Low-level node constructor used by the operator functions.
  Var push(OpKind kind, Matrix value, int a, int b = -1, double k = 0.0,
           Eigen::Index i0 = 0, Eigen::Index i1 = 0);

private:
  struct Node {
    OpKind kind;
    int a;
    int b;
    double k;
    Eigen::Index i0;
    Eigen::Index i1;
    bool needs_grad;
    Matrix value;
  };

  [[nodiscard]] Matrix evaluate(const Node &n) const;

  std::vector<Node> nodes_;
};

// Operations. All operands must live on the same tape.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator-(Var a);
Var operator*(double k, Var a);
Var operator*(Var a, double k);
Var operator+(Var a, double k);
Var operator+(double k, Var a);
Var operator-(Var a, double k);
Var operator-(double k, Var a);
/// Elementwise product.
Var mul(Var a, Var b);
/// Adds a 1 x n row to every row of an m x n matrix.
Var add_row(Var a, Var row);
Var scale(Var a, double k);
Var add_scalar(Var a, double k);
Var tanh(Var a);
Var sin(Var a);
Var cos(Var a);
Var exp(Var a);
Var reciprocal(Var a);
Var square(Var a);
Var sum(Var a);
Var mean(Var a);
/// Columns [start, start + count).
Var cols(Var a, Eigen::Index start, Eigen::Index count);
Var hcat(Var a, Var b);

/// Forward-tangent propagation of `seed` (shaped like `input`) through the
/// nodes that depend on `input`. Tangents are themselves tape nodes, so the
/// result can be differentiated again by backward(). Outputs that do not
/// depend on `input` receive zero constants.
std::vector<Var> input_derivative(Tape &tape, const std::vector<Var> &outputs,
                                  Var input, const Matrix &seed);
/// Same with an all-ones seed, i.e. d(output)/d(input) for a scalar input.
std::vector<Var> input_derivative(Tape &tape, const std::vector<Var> &outputs,
                                  Var input);

} // namespace pimbpo::ad
