#include "pimbpo/diff/checkpoint.hpp"
#include "pimbpo/diff/init.hpp"
#include "pimbpo/diff/mlp.hpp"
#include "pimbpo/diff/optim.hpp"
#include "pimbpo/diff/tape.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

using namespace pimbpo::ad;

namespace {

Matrix random_matrix(std::mt19937_64 &rng, Eigen::Index r, Eigen::Index c, double lo = -2.0,
                     double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// Central finite differences of a scalar function of a matrix.
Matrix fd_gradient(const std::function<double(const Matrix &)> &f, const Matrix &x,
                   double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Matrix xp = x, xm = x;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    g.data()[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

double max_rel_error(const Matrix &a, const Matrix &b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a.data()[i]), std::abs(b.data()[i]), 1e-3});
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]) / denom);
  }
  return worst;
}

} // namespace

TEST_CASE("backward: identity and product rule") {
  Tape t;
  Var x = t.variable(3.0);
  auto g = t.backward(x);
  CHECK(g[x](0, 0) == 1.0);

  Tape t2;
  Var a = t2.variable(2.0);
  Var b = t2.variable(5.0);
  Var p = mul(a, b);
  auto g2 = t2.backward(p);
  CHECK(g2[a](0, 0) == doctest::Approx(5.0));
  CHECK(g2[b](0, 0) == doctest::Approx(2.0));
}

TEST_CASE("backward: contract violations and propagation errors") {
  Tape t;
  Var x = t.variable(Matrix::Ones(2, 2));
  CHECK_THROWS_AS((void)t.backward(x), ContractViolation);

  Tape t2;
  Var y = t2.variable(Matrix::Constant(1, 1, std::numeric_limits<double>::quiet_NaN()));
  Var z = sum(square(y));
  try {
    (void)t2.backward(z);
    FAIL("expected PropagationError");
  } catch (const PropagationError &e) {
    CHECK(e.node() == y.index());
  }
}

TEST_CASE("backward leaves tape values unchanged and replay is exact") {
  std::mt19937_64 rng(7);
  Tape t;
  Var x = t.variable(random_matrix(rng, 3, 4));
  Var w = t.variable(random_matrix(rng, 4, 2));
  Var y = sum(tanh(matmul(x, w)));
  const double before = y.scalar();
  (void)t.backward(y);
  CHECK(y.scalar() == before);
  CHECK(t.verify_replay());
}

TEST_CASE("2-layer tanh network gradient matches finite differences") {
  std::mt19937_64 rng(11);
  const Matrix x = random_matrix(rng, 6, 3);
  Mlp net("n", {3, 5, 4, 1});
  ParamVector p = xavier_normal_init(net.shapes(), 3);
  for (auto &b : p.blocks()) b.value = random_matrix(rng, b.value.rows(), b.value.cols(), -1, 1);

  Tape t;
  TapeParams bound(t, p);
  Var loss = mean(square(net.forward(bound, t.constant(x))));
  ParamVector g = bound.gradient(t.backward(loss));

  for (const auto &blk : p.blocks()) {
    auto f = [&](const Matrix &v) {
      ParamVector q = p;
      q[blk.name] = v;
      return net.evaluate(q, x).array().square().mean();
    };
    CHECK(max_rel_error(g[blk.name], fd_gradient(f, blk.value)) < 1e-4);
  }
}

TEST_CASE("every op passes a randomized finite-difference gradient check") {
  std::mt19937_64 rng(123);
  using Fn = std::function<Var(Tape &, Var, Var)>;
  const std::vector<std::pair<const char *, Fn>> ops = {
      {"matmul", [](Tape &, Var a, Var b) { return matmul(a, transpose(b)); }},
      {"add", [](Tape &, Var a, Var b) { return a + b; }},
      {"sub", [](Tape &, Var a, Var b) { return a - b; }},
      {"neg", [](Tape &, Var a, Var) { return -a; }},
      {"mul", [](Tape &, Var a, Var b) { return mul(a, b); }},
      {"add_row", [](Tape &, Var a, Var b) { return add_row(a, cols(transpose(cols(b, 0, 1)), 0, 3)); }},
      {"scale", [](Tape &, Var a, Var) { return 1.7 * a; }},
      {"add_scalar", [](Tape &, Var a, Var) { return a + 0.3; }},
      {"tanh", [](Tape &, Var a, Var) { return tanh(a); }},
      {"sin", [](Tape &, Var a, Var) { return sin(a); }},
      {"cos", [](Tape &, Var a, Var) { return cos(a); }},
      {"exp", [](Tape &, Var a, Var) { return exp(a); }},
      {"square", [](Tape &, Var a, Var) { return square(a); }},
      {"reciprocal", [](Tape &, Var a, Var) { return reciprocal(add_scalar(square(a), 0.5)); }},
      {"mean", [](Tape &, Var a, Var) { return mean(a); }},
      {"cols", [](Tape &, Var a, Var) { return cols(a, 1, 2); }},
      {"hcat", [](Tape &, Var a, Var b) { return hcat(a, b); }},
  };
  for (const auto &[name, op] : ops) {
    CAPTURE(name);
    for (int trial = 0; trial < 5; ++trial) {
      const Matrix a0 = random_matrix(rng, 3, 3);
      const Matrix b0 = random_matrix(rng, 3, 3);
      const Matrix weights = random_matrix(rng, 3, 6, -1, 1);
      // Contract the op output with fixed random weights to get a scalar.
      auto eval = [&](const Matrix &a, const Matrix &b, Var *pa, Var *pb, Tape &t) {
        Var va = t.variable(a);
        Var vb = t.variable(b);
        if (pa) *pa = va;
        if (pb) *pb = vb;
        Var out = op(t, va, vb);
        Var w = t.constant(weights.topLeftCorner(out.rows(), out.cols()));
        return sum(mul(out, w));
      };
      Tape t;
      Var va, vb;
      Var s = eval(a0, b0, &va, &vb, t);
      auto grads = t.backward(s);
      auto fa = [&](const Matrix &a) {
        Tape tt;
        return eval(a, b0, nullptr, nullptr, tt).scalar();
      };
      auto fb = [&](const Matrix &b) {
        Tape tt;
        return eval(a0, b, nullptr, nullptr, tt).scalar();
      };
      CHECK(max_rel_error(grads[va], fd_gradient(fa, a0)) < 1e-4);
      CHECK(max_rel_error(grads[vb], fd_gradient(fb, b0)) < 1e-4);
    }
  }
}

TEST_CASE("input_derivative: analytic cases") {
  Tape t;
  Var tau = t.variable(0.0);
  auto d = input_derivative(t, {sin(tau)}, tau);
  CHECK(d[0].scalar() == doctest::Approx(1.0));

  Tape t2;
  Var x = t2.variable(3.0);
  auto d2 = input_derivative(t2, {square(x)}, x);
  CHECK(d2[0].scalar() == doctest::Approx(6.0));

  Tape t3;
  Var y = t3.variable(1.0);
  Var c = t3.constant(2.0);
  Var unrelated = square(c);
  auto d3 = input_derivative(t3, {unrelated}, y);
  CHECK(d3[0].scalar() == 0.0);

  Tape t4;
  Var leaf = t4.variable(1.0);
  Var not_leaf = square(leaf);
  CHECK_THROWS_AS(input_derivative(t4, {not_leaf}, not_leaf), ContractViolation);
}

TEST_CASE("input_derivative through an MLP matches finite differences in one input column") {
  std::mt19937_64 rng(5);
  Mlp net("p", {5, 8, 8, 3});
  ParamVector p = xavier_normal_init(net.shapes(), 99);
  const Matrix x = random_matrix(rng, 7, 5, -1, 1);
  Matrix seed = Matrix::Zero(7, 5);
  seed.col(0).setOnes();

  Tape t;
  TapeParams bound(t, p);
  Var in = t.variable(x);
  Var out = net.forward(bound, in);
  Matrix tangent = input_derivative(t, {out}, in, seed)[0].value();

  const double h = 1e-5;
  Matrix xp = x, xm = x;
  xp.col(0).array() += h;
  xm.col(0).array() -= h;
  Matrix fd = (net.evaluate(p, xp) - net.evaluate(p, xm)) / (2 * h);
  CHECK(max_rel_error(tangent, fd) < 1e-4);
}

TEST_CASE("forward-over-reverse: gradient of a tangent matches nested finite differences") {
  std::mt19937_64 rng(17);
  Mlp net("q", {2, 6, 1});
  ParamVector p = xavier_normal_init(net.shapes(), 4);
  const Matrix x = random_matrix(rng, 4, 2, -1, 1);
  Matrix seed = Matrix::Zero(4, 2);
  seed.col(0).setOnes();

  // L(p) = mean((d net / d x0)^2)
  auto loss_value = [&](const ParamVector &q) {
    const double h = 1e-4;
    Matrix xp = x, xm = x;
    xp.col(0).array() += h;
    xm.col(0).array() -= h;
    Matrix d = (net.evaluate(q, xp) - net.evaluate(q, xm)) / (2 * h);
    return d.array().square().mean();
  };

  Tape t;
  TapeParams bound(t, p);
  Var in = t.variable(x);
  Var out = net.forward(bound, in);
  Var dt = input_derivative(t, {out}, in, seed)[0];
  Var loss = mean(square(dt));
  ParamVector g = bound.gradient(t.backward(loss));

  for (const auto &blk : p.blocks()) {
    auto f = [&](const Matrix &v) {
      ParamVector q = p;
      q[blk.name] = v;
      return loss_value(q);
    };
    CHECK(max_rel_error(g[blk.name], fd_gradient(f, blk.value, 1e-4)) < 1e-3);
  }
}

TEST_CASE("adam_step") {
  ParamVector p;
  p.add("x", Matrix::Zero(1, 1));
  SUBCASE("zero gradient leaves parameters unchanged") {
    AdamState s(AdamConfig{0.1}, p);
    ParamVector g = p.zeros_like();
    adam_step(s, p, g);
    CHECK(p["x"](0, 0) == 0.0);
    CHECK(s.step == 1);
  }
  SUBCASE("first step moves by the learning rate") {
    AdamState s(AdamConfig{0.1}, p);
    ParamVector g;
    g.add("x", Matrix::Ones(1, 1));
    adam_step(s, p, g);
    CHECK(p["x"](0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
    const double first = -p["x"](0, 0);
    const double before = p["x"](0, 0);
    adam_step(s, p, g);
    const double second = before - p["x"](0, 0);
    // identical gradients keep |m_hat / sqrt(v_hat)| at 1 up to epsilon
    CHECK(second <= first);
    CHECK(s.step == 2);
  }
  SUBCASE("shape mismatch") {
    AdamState s(AdamConfig{}, p);
    ParamVector g;
    g.add("x", Matrix::Ones(2, 1));
    CHECK_THROWS_AS(adam_step(s, p, g), ContractViolation);
  }
}

TEST_CASE("clip_grad_norm rescales to the limit") {
  ParamVector g;
  g.add("a", Matrix::Constant(1, 1, 3.0));
  g.add("b", Matrix::Constant(1, 1, 4.0));
  CHECK(clip_grad_norm(g, 0.5) == doctest::Approx(5.0));
  CHECK(g.norm() == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("lbfgs on a quadratic converges to the analytic minimum") {
  Eigen::VectorXd target(4);
  target << 1.0, -2.0, 0.5, 3.0;
  LossEvaluator f = [&](const Eigen::VectorXd &x, Eigen::VectorXd &g) {
    g = 2.0 * (x - target);
    return (x - target).squaredNorm();
  };
  Eigen::VectorXd x = Eigen::VectorXd::Constant(4, 10.0);
  LbfgsState s;
  int it = 0;
  for (; it < 20 && (x - target).norm() > 1e-8; ++it) (void)lbfgs_step(s, x, f);
  CHECK((x - target).lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK(it <= 20);
  CHECK(s.s_history.size() <= 10);

  Eigen::VectorXd at_min = target;
  LbfgsState s2;
  auto r = lbfgs_step(s2, at_min, f);
  CHECK(r.converged);
  CHECK(at_min == target);
}

TEST_CASE("lbfgs solves the Rosenbrock function") {
  LossEvaluator f = [](const Eigen::VectorXd &x, Eigen::VectorXd &g) {
    const double a = 1.0 - x[0];
    const double b = x[1] - x[0] * x[0];
    g.resize(2);
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  Eigen::VectorXd x(2);
  x << -1.2, 1.0;
  LbfgsState s;
  double prev = std::numeric_limits<double>::infinity();
  double loss = prev;
  for (int it = 0; it < 200; ++it) {
    auto r = lbfgs_step(s, x, f);
    loss = r.loss;
    CHECK(loss <= prev);
    prev = loss;
    if (r.converged || loss < 1e-12) break;
  }
  Eigen::VectorXd g;
  CHECK(f(x, g) < 1e-6);
  CHECK(x.allFinite());
}

TEST_CASE("lbfgs line-search failure reports a stall and keeps params") {
  // Gradient points the wrong way: no step satisfies sufficient decrease.
  LossEvaluator f = [](const Eigen::VectorXd &x, Eigen::VectorXd &g) {
    g = -Eigen::VectorXd::Ones(x.size());
    return x.sum();
  };
  Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
  LbfgsState s;
  auto r = lbfgs_step(s, x, f);
  CHECK(r.stalled);
  CHECK(x.isZero());
}

TEST_CASE("xavier_normal_init") {
  std::vector<BlockShape> shapes = {{"W", 32, 32, BlockRole::Weight}, {"b", 1, 32, BlockRole::Bias}};
  double var_sum = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ParamVector p = xavier_normal_init(shapes, seed);
    CHECK(p["b"].isZero());
    const Matrix &w = p["W"];
    const double mean = w.mean();
    var_sum += (w.array() - mean).square().sum() / static_cast<double>(w.size() - 1);
  }
  const double expected = 2.0 / 64.0;
  CHECK(std::abs(var_sum / 10.0 - expected) < 0.2 * expected);

  ParamVector a = xavier_normal_init(shapes, 42);
  ParamVector b = xavier_normal_init(shapes, 42);
  CHECK(a.hash() == b.hash());
}

TEST_CASE("parameter checkpoints round-trip in both formats") {
  ParamVector p = xavier_normal_init({{"W", 3, 2, BlockRole::Weight}, {"b", 1, 2, BlockRole::Bias}}, 1);
  p["b"](0, 1) = 1.0 / 3.0;

  std::stringstream bin;
  write_binary(bin, p);
  ParamVector q = read_binary(bin);
  CHECK(q.hash() == p.hash());

  ParamVector r = params_from_json(nlohmann::json::parse(to_json(p).dump()));
  CHECK(r.hash() == p.hash());

  nlohmann::json bad = to_json(p);
  bad["version"] = 99;
  CHECK_THROWS_AS(params_from_json(bad), CheckpointError);

  // Explicit little-endian layout of the first value after the header.
  std::stringstream one;
  ParamVector single;
  single.add("x", Matrix::Constant(1, 1, 1.0));
  write_binary(one, single);
  const std::string bytes = one.str();
  REQUIRE(bytes.size() == 8 + 4 + 4 + 4 + 1 + 8 + 8 + 8);
  CHECK(bytes.substr(0, 8) == "PMBPPARM");
  CHECK(static_cast<unsigned char>(bytes[bytes.size() - 1]) == 0x3F);
  CHECK(static_cast<unsigned char>(bytes[bytes.size() - 2]) == 0xF0);
}
