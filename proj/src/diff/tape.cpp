#include "pimbpo/diff/tape.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>

namespace pimbpo::ad {

const char *op_name(OpKind kind) {
  switch (kind) {
  case OpKind::Leaf: return "leaf";
  case OpKind::Constant: return "constant";
  case OpKind::MatMul: return "matmul";
  case OpKind::Transpose: return "transpose";
  case OpKind::Add: return "add";
  case OpKind::Sub: return "sub";
  case OpKind::Neg: return "neg";
  case OpKind::Mul: return "mul";
  case OpKind::AddRow: return "add_row";
  case OpKind::Scale: return "scale";
  case OpKind::AddScalar: return "add_scalar";
  case OpKind::Tanh: return "tanh";
  case OpKind::Sin: return "sin";
  case OpKind::Cos: return "cos";
  case OpKind::Exp: return "exp";
  case OpKind::Reciprocal: return "reciprocal";
  case OpKind::Square: return "square";
  case OpKind::Sum: return "sum";
  case OpKind::Mean: return "mean";
  case OpKind::Cols: return "cols";
  case OpKind::HCat: return "hcat";
  }
  return "?";
}

const Matrix &Var::value() const {
  if (!valid()) throw ContractViolation("use of an unbound Var");
  return tape_->value(index_);
}

double Var::scalar() const {
  const Matrix &v = value();
  if (v.size() != 1) throw ContractViolation("scalar() on a non-scalar node");
  return v(0, 0);
}

Matrix Gradients::operator[](Var v) const {
  if (v.tape() != tape_) throw ContractViolation("Var from a different tape");
  const Matrix &adj = adjoints_.at(static_cast<std::size_t>(v.index()));
  if (adj.size() == 0) return Matrix::Zero(v.rows(), v.cols());
  return adj;
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{OpKind::Leaf, -1, -1, 0.0, 0, 0, true, std::move(value)});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::variable(double value) { return variable(Matrix::Constant(1, 1, value)); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{OpKind::Constant, -1, -1, 0.0, 0, 0, false, std::move(value)});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Tape::NodeInfo Tape::info(int index) const {
  const Node &n = nodes_.at(index);
  return NodeInfo{n.kind, n.a, n.b, n.k, n.i0, n.i1};
}

bool Tape::is_leaf(Var v) const {
  return v.tape() == this && nodes_.at(v.index()).kind == OpKind::Leaf;
}

Var Tape::push(OpKind kind, Matrix value, int a, int b, double k, Eigen::Index i0,
               Eigen::Index i1) {
  bool ng = (a >= 0 && nodes_[a].needs_grad) || (b >= 0 && nodes_[b].needs_grad);
  nodes_.push_back(Node{kind, a, b, k, i0, i1, ng, std::move(value)});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

namespace {

Tape *same_tape(Var a, Var b) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape())
    throw ContractViolation("operands must live on the same tape");
  return a.tape();
}

Tape *tape_of(Var a) {
  if (!a.valid()) throw ContractViolation("use of an unbound Var");
  return a.tape();
}

void require_same_shape(Var a, Var b, const char *op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream os;
    os << op << ": shape mismatch " << a.rows() << "x" << a.cols() << " vs " << b.rows()
       << "x" << b.cols();
    throw ContractViolation(os.str());
  }
}

Matrix one_minus_square(const Matrix &y) { return (1.0 - y.array().square()).matrix(); }

} // namespace

Matrix Tape::evaluate(const Node &n) const {
  const Matrix *a = n.a >= 0 ? &nodes_[n.a].value : nullptr;
  const Matrix *b = n.b >= 0 ? &nodes_[n.b].value : nullptr;
  switch (n.kind) {
  case OpKind::Leaf:
  case OpKind::Constant: return n.value;
  case OpKind::MatMul: return (*a) * (*b);
  case OpKind::Transpose: return a->transpose();
  case OpKind::Add: return *a + *b;
  case OpKind::Sub: return *a - *b;
  case OpKind::Neg: return -*a;
  case OpKind::Mul: return a->cwiseProduct(*b);
  case OpKind::AddRow: return a->rowwise() + b->row(0);
  case OpKind::Scale: return n.k * (*a);
  case OpKind::AddScalar: return (a->array() + n.k).matrix();
  case OpKind::Tanh: return a->array().tanh().matrix();
  case OpKind::Sin: return a->array().sin().matrix();
  case OpKind::Cos: return a->array().cos().matrix();
  case OpKind::Exp: return a->array().exp().matrix();
  case OpKind::Reciprocal: return a->array().inverse().matrix();
  case OpKind::Square: return a->array().square().matrix();
  case OpKind::Sum: return Matrix::Constant(1, 1, a->sum());
  case OpKind::Mean: return Matrix::Constant(1, 1, a->mean());
  case OpKind::Cols: return a->middleCols(n.i0, n.i1);
  case OpKind::HCat: {
    Matrix out(a->rows(), a->cols() + b->cols());
    out << *a, *b;
    return out;
  }
  }
  throw ContractViolation("unknown op");
}

bool Tape::verify_replay() const {
  for (const Node &n : nodes_) {
    if (n.kind == OpKind::Leaf || n.kind == OpKind::Constant) continue;
    Matrix again = evaluate(n);
    if (again.rows() != n.value.rows() || again.cols() != n.value.cols()) return false;
    for (Eigen::Index i = 0; i < again.size(); ++i) {
      double x = again.data()[i];
      double y = n.value.data()[i];
      if (!(x == y) && !(std::isnan(x) && std::isnan(y))) return false;
    }
  }
  return true;
}

Gradients Tape::backward(Var output) const {
  if (output.tape() != this) throw ContractViolation("output is not on this tape");
  const int out = output.index();
  if (nodes_[out].value.size() != 1)
    throw ContractViolation("backward() requires a scalar output");

  for (int i = 0; i <= out; ++i) {
    if (!nodes_[i].value.allFinite()) {
      std::ostringstream os;
      os << "non-finite forward value at node " << i << " (" << op_name(nodes_[i].kind)
         << ")";
      throw PropagationError(i, os.str());
    }
  }

  std::vector<Matrix> adj(nodes_.size());
  adj[out] = Matrix::Ones(1, 1);

  auto accumulate = [&](int idx, auto &&contribution) {
    if (idx < 0 || !nodes_[idx].needs_grad) return;
    if (adj[idx].size() == 0)
      adj[idx] = contribution;
    else
      adj[idx] += contribution;
  };

  for (int i = out; i >= 0; --i) {
    if (adj[i].size() == 0) continue;
    const Node &n = nodes_[i];
    const Matrix &g = adj[i];
    const Matrix *a = n.a >= 0 ? &nodes_[n.a].value : nullptr;
    const Matrix *b = n.b >= 0 ? &nodes_[n.b].value : nullptr;
    switch (n.kind) {
    case OpKind::Leaf:
    case OpKind::Constant: break;
    case OpKind::MatMul:
      if (nodes_[n.a].needs_grad) accumulate(n.a, Matrix(g * b->transpose()));
      if (nodes_[n.b].needs_grad) accumulate(n.b, Matrix(a->transpose() * g));
      break;
    case OpKind::Transpose: accumulate(n.a, Matrix(g.transpose())); break;
    case OpKind::Add:
      accumulate(n.a, g);
      accumulate(n.b, g);
      break;
    case OpKind::Sub:
      accumulate(n.a, g);
      accumulate(n.b, Matrix(-g));
      break;
    case OpKind::Neg: accumulate(n.a, Matrix(-g)); break;
    case OpKind::Mul:
      if (nodes_[n.a].needs_grad) accumulate(n.a, Matrix(g.cwiseProduct(*b)));
      if (nodes_[n.b].needs_grad) accumulate(n.b, Matrix(g.cwiseProduct(*a)));
      break;
    case OpKind::AddRow:
      accumulate(n.a, g);
      if (nodes_[n.b].needs_grad) accumulate(n.b, Matrix(g.colwise().sum()));
      break;
    case OpKind::Scale: accumulate(n.a, Matrix(n.k * g)); break;
    case OpKind::AddScalar: accumulate(n.a, g); break;
    case OpKind::Tanh: accumulate(n.a, Matrix(g.cwiseProduct(one_minus_square(n.value)))); break;
    case OpKind::Sin: accumulate(n.a, Matrix(g.array() * a->array().cos())); break;
    case OpKind::Cos: accumulate(n.a, Matrix(-g.array() * a->array().sin())); break;
    case OpKind::Exp: accumulate(n.a, Matrix(g.cwiseProduct(n.value))); break;
    case OpKind::Reciprocal: accumulate(n.a, Matrix(-g.array() * n.value.array().square())); break;
    case OpKind::Square: accumulate(n.a, Matrix(2.0 * g.cwiseProduct(*a))); break;
    case OpKind::Sum: accumulate(n.a, Matrix::Constant(a->rows(), a->cols(), g(0, 0))); break;
    case OpKind::Mean:
      accumulate(n.a, Matrix::Constant(a->rows(), a->cols(),
                                       g(0, 0) / static_cast<double>(a->size())));
      break;
    case OpKind::Cols:
      if (nodes_[n.a].needs_grad) {
        Matrix full = Matrix::Zero(a->rows(), a->cols());
        full.middleCols(n.i0, n.i1) = g;
        accumulate(n.a, full);
      }
      break;
    case OpKind::HCat:
      accumulate(n.a, Matrix(g.leftCols(a->cols())));
      accumulate(n.b, Matrix(g.rightCols(b->cols())));
      break;
    }
  }
  return Gradients(this, std::move(adj));
}

Var matmul(Var a, Var b) {
  Tape *t = same_tape(a, b);
  if (a.cols() != b.rows()) {
    std::ostringstream os;
    os << "matmul: inner dimensions differ (" << a.rows() << "x" << a.cols() << " * "
       << b.rows() << "x" << b.cols() << ")";
    throw ContractViolation(os.str());
  }
  return t->push(OpKind::MatMul, a.value() * b.value(), a.index(), b.index());
}

Var transpose(Var a) {
  return tape_of(a)->push(OpKind::Transpose, a.value().transpose(), a.index());
}

Var operator+(Var a, Var b) {
  Tape *t = same_tape(a, b);
  require_same_shape(a, b, "add");
  return t->push(OpKind::Add, a.value() + b.value(), a.index(), b.index());
}

Var operator-(Var a, Var b) {
  Tape *t = same_tape(a, b);
  require_same_shape(a, b, "sub");
  return t->push(OpKind::Sub, a.value() - b.value(), a.index(), b.index());
}

Var operator-(Var a) { return tape_of(a)->push(OpKind::Neg, -a.value(), a.index()); }

Var scale(Var a, double k) { return tape_of(a)->push(OpKind::Scale, k * a.value(), a.index(), -1, k); }
Var operator*(double k, Var a) { return scale(a, k); }
Var operator*(Var a, double k) { return scale(a, k); }

Var add_scalar(Var a, double k) {
  return tape_of(a)->push(OpKind::AddScalar, (a.value().array() + k).matrix(), a.index(), -1, k);
}
Var operator+(Var a, double k) { return add_scalar(a, k); }
Var operator+(double k, Var a) { return add_scalar(a, k); }
Var operator-(Var a, double k) { return add_scalar(a, -k); }
Var operator-(double k, Var a) { return add_scalar(-a, k); }

Var mul(Var a, Var b) {
  Tape *t = same_tape(a, b);
  require_same_shape(a, b, "mul");
  return t->push(OpKind::Mul, a.value().cwiseProduct(b.value()), a.index(), b.index());
}

Var add_row(Var a, Var row) {
  Tape *t = same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols())
    throw ContractViolation("add_row: row must be 1 x cols(a)");
  return t->push(OpKind::AddRow, a.value().rowwise() + row.value().row(0), a.index(),
                 row.index());
}

Var tanh(Var a) { return tape_of(a)->push(OpKind::Tanh, a.value().array().tanh().matrix(), a.index()); }
Var sin(Var a) { return tape_of(a)->push(OpKind::Sin, a.value().array().sin().matrix(), a.index()); }
Var cos(Var a) { return tape_of(a)->push(OpKind::Cos, a.value().array().cos().matrix(), a.index()); }
Var exp(Var a) { return tape_of(a)->push(OpKind::Exp, a.value().array().exp().matrix(), a.index()); }
Var reciprocal(Var a) {
  return tape_of(a)->push(OpKind::Reciprocal, a.value().array().inverse().matrix(), a.index());
}
Var square(Var a) {
  return tape_of(a)->push(OpKind::Square, a.value().array().square().matrix(), a.index());
}
Var sum(Var a) {
  return tape_of(a)->push(OpKind::Sum, Matrix::Constant(1, 1, a.value().sum()), a.index());
}
Var mean(Var a) {
  if (a.value().size() == 0) throw ContractViolation("mean of an empty node");
  return tape_of(a)->push(OpKind::Mean, Matrix::Constant(1, 1, a.value().mean()), a.index());
}

Var cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw ContractViolation("cols: range out of bounds");
  return tape_of(a)->push(OpKind::Cols, a.value().middleCols(start, count), a.index(), -1, 0.0,
                          start, count);
}

Var hcat(Var a, Var b) {
  Tape *t = same_tape(a, b);
  if (a.rows() != b.rows()) throw ContractViolation("hcat: row counts differ");
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  return t->push(OpKind::HCat, std::move(out), a.index(), b.index());
}

std::vector<Var> input_derivative(Tape &tape, const std::vector<Var> &outputs, Var input,
                                  const Matrix &seed) {
  if (!tape.is_leaf(input))
    throw ContractViolation("input_derivative: input must be a leaf of this tape");
  if (seed.rows() != input.rows() || seed.cols() != input.cols())
    throw ContractViolation("input_derivative: seed must match the input shape");

  int last = input.index();
  for (Var o : outputs) {
    if (o.tape() != &tape) throw ContractViolation("input_derivative: output on another tape");
    last = std::max(last, o.index());
  }

  std::unordered_map<int, Var> tangent;
  tangent.emplace(input.index(), tape.constant(seed));

  auto get = [&](int idx) -> Var {
    if (idx < 0) return Var{};
    auto it = tangent.find(idx);
    return it == tangent.end() ? Var{} : it->second;
  };
  auto or_zero = [&](Var t, int idx) {
    if (t.valid()) return t;
    Eigen::Index r = tape.value(idx).rows();
    Eigen::Index c = tape.value(idx).cols();
    return tape.constant(Matrix::Zero(r, c));
  };

  // Only nodes that existed before the first tangent was appended are walked.
  const int seed_node = static_cast<int>(tape.size()) - 1;
  for (int i = input.index() + 1; i <= last && i < seed_node; ++i) {
    const Tape::NodeInfo n = tape.info(i);
    if (n.kind == OpKind::Leaf || n.kind == OpKind::Constant) continue;
    Var ta = get(n.a);
    Var tb = get(n.b);
    if (!ta.valid() && !tb.valid()) continue;
    Var a{&tape, n.a};
    Var b{&tape, n.b};
    Var y{&tape, i};
    Var t;
    switch (n.kind) {
    case OpKind::Leaf:
    case OpKind::Constant: break;
    case OpKind::MatMul:
      if (ta.valid() && tb.valid())
        t = matmul(ta, b) + matmul(a, tb);
      else if (ta.valid())
        t = matmul(ta, b);
      else
        t = matmul(a, tb);
      break;
    case OpKind::Transpose: t = transpose(ta); break;
    case OpKind::Add:
      t = ta.valid() && tb.valid() ? ta + tb : (ta.valid() ? ta : tb);
      break;
    case OpKind::Sub:
      t = ta.valid() && tb.valid() ? ta - tb : (ta.valid() ? ta : -tb);
      break;
    case OpKind::Neg: t = -ta; break;
    case OpKind::Mul:
      if (ta.valid() && tb.valid())
        t = mul(ta, b) + mul(a, tb);
      else if (ta.valid())
        t = mul(ta, b);
      else
        t = mul(a, tb);
      break;
    case OpKind::AddRow: t = tb.valid() ? add_row(or_zero(ta, n.a), tb) : ta; break;
    case OpKind::Scale: t = scale(ta, n.k); break;
    case OpKind::AddScalar: t = ta; break;
    case OpKind::Tanh: t = mul(ta, 1.0 - square(y)); break;
    case OpKind::Sin: t = mul(ta, cos(a)); break;
    case OpKind::Cos: t = -mul(ta, sin(a)); break;
    case OpKind::Exp: t = mul(ta, y); break;
    case OpKind::Reciprocal: t = -mul(ta, square(y)); break;
    case OpKind::Square: t = mul(ta, 2.0 * a); break;
    case OpKind::Sum: t = sum(ta); break;
    case OpKind::Mean: t = mean(ta); break;
    case OpKind::Cols: t = cols(ta, n.i0, n.i1); break;
    case OpKind::HCat: t = hcat(or_zero(ta, n.a), or_zero(tb, n.b)); break;
    }
    tangent.emplace(i, t);
  }

  std::vector<Var> result;
  result.reserve(outputs.size());
  for (Var o : outputs) result.push_back(or_zero(get(o.index()), o.index()));
  return result;
}

std::vector<Var> input_derivative(Tape &tape, const std::vector<Var> &outputs, Var input) {
  return input_derivative(tape, outputs, input, Matrix::Ones(input.rows(), input.cols()));
}

} // namespace pimbpo::ad
