#include "pimbpo/cstr/env.hpp"
#include "pimbpo/koopman/koopman.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>

using namespace pimbpo;
using koopman::KoopmanModel;
using koopman::Matrix;

namespace {

Matrix uniform(std::mt19937_64 &rng, Eigen::Index r, Eigen::Index c, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// Plain Eigen forward pass of the 2-4-6-8 encoder, rows are samples.
Matrix encode_reference(const ad::ParamVector &p, const Matrix &x) {
  Matrix h = x;
  for (int i = 0; i < 3; ++i) {
    const std::string k = std::to_string(i);
    h = (h * p["enc.W" + k]).rowwise() + p["enc.b" + k].row(0);
    if (i < 2) h = h.array().tanh().matrix();
  }
  return h;
}

cstr::TransitionSet random_action_transitions(std::size_t count, std::uint64_t seed) {
  auto prices = std::make_shared<const cstr::PriceSeries>(cstr::synthetic_prices());
  cstr::CstrEnv env(cstr::EnvConfig{}, prices, seed);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> s(-1, 1);
  cstr::TransitionSet out;
  env.reset();
  while (out.size() < count) {
    if (env.state().done) env.reset();
    const cstr::SysState x = env.state().x;
    const auto r = env.step(cstr::unscale_action({s(rng), s(rng)}));
    out.push_back({x, r.applied, env.state().x});
  }
  return out;
}

} // namespace

TEST_CASE("parameter layout and initialization") {
  KoopmanModel m;
  const auto p = m.init(1);
  CHECK(p["A"].rows() == 8);
  CHECK(p["A"].cols() == 8);
  CHECK(p["B"].rows() == 8);
  CHECK(p["B"].cols() == 2);
  CHECK(p["C"].rows() == 2);
  CHECK(p["C"].cols() == 8);
  CHECK(p["enc.W0"].rows() == 2);
  CHECK(p["enc.W2"].cols() == 8);
  CHECK(p["A"].cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(8.0));
  CHECK(p["B"].cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(2.0));
  CHECK(p["B"].cwiseAbs().maxCoeff() > 1.0 / std::sqrt(8.0)); // drawn with fan-in 2, not 8
  CHECK(p["enc.b1"].cwiseAbs().maxCoeff() <= 0.5);            // fan-in 4
  CHECK(m.init(1).hash() == p.hash());
  CHECK(m.init(2).hash() != p.hash());
}

TEST_CASE("encode") {
  KoopmanModel m;
  std::mt19937_64 rng(2);
  const auto p = m.init(7);
  const Matrix x = uniform(rng, 5, 2, -3, 3);
  const Matrix z = m.encode(p, x);
  CHECK(z.rows() == 5);
  CHECK(z.cols() == 8);
  CHECK(z.allFinite());
  CHECK(m.encode(p, x) == z);
  CHECK((z - encode_reference(p, x)).cwiseAbs().maxCoeff() < 1e-14);

  // Gradient of sum(encode) w.r.t. the input against central differences.
  ad::Tape t;
  ad::TapeParams bound(t, p);
  ad::Var xv = t.variable(x);
  ad::Var s = sum(m.encode(bound, xv));
  const Matrix g = t.backward(s)[xv];
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Matrix xp = x, xm = x;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    const double fd = (m.encode(p, xp).sum() - m.encode(p, xm).sum()) / (2 * h);
    CHECK(std::abs(g.data()[i] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("si_losses match an independent evaluation") {
  KoopmanModel m;
  std::mt19937_64 rng(3);
  const auto p = m.init(11);
  const cstr::ScaledBatch b{uniform(rng, 9, 2), uniform(rng, 9, 2), uniform(rng, 9, 2)};
  const auto l = koopman::si_losses(m, p, b);

  const Matrix z = encode_reference(p, b.x);
  const Matrix zn = encode_reference(p, b.next);
  const Matrix zp = z * p["A"].transpose() + b.u * p["B"].transpose();
  const double ae = (z * p["C"].transpose() - b.x).rowwise().squaredNorm().mean();
  const double lat = (zp - zn).rowwise().squaredNorm().mean();
  const double pred = (zp * p["C"].transpose() - b.next).rowwise().squaredNorm().mean();
  CHECK(l.reconstruction == doctest::Approx(ae).epsilon(1e-12));
  CHECK(l.latent == doctest::Approx(lat).epsilon(1e-12));
  CHECK(l.prediction == doctest::Approx(pred).epsilon(1e-12));
  CHECK(l.reconstruction > 0.0);
  CHECK(l.latent > 0.0);
  CHECK(l.prediction > 0.0);

  // One-step prediction is the decoded latent step, same path as the loss.
  const Matrix y = m.predict(p, b.x, b.u);
  CHECK((y - zp * p["C"].transpose()).cwiseAbs().maxCoeff() < 1e-14);
  ad::Tape t;
  ad::TapeParams bound(t, p);
  CHECK(koopman::si_loss_vars(m, bound, t, b).prediction_values.value() == y);
}

TEST_CASE("exactly representable linear data gives vanishing losses") {
  // Two samples: C must map [z, z_next] (8x4) onto [x, x_next], [A B] must
  // map [z; u] onto z_next. Both systems are underdetermined, so the
  // minimum-norm solutions are exact.
  KoopmanModel m;
  std::mt19937_64 rng(5);
  auto p = m.init(3);
  const cstr::ScaledBatch b{uniform(rng, 2, 2), uniform(rng, 2, 2), uniform(rng, 2, 2)};
  const Matrix z = m.encode(p, b.x);
  const Matrix zn = m.encode(p, b.next);

  Matrix zz(8, 4), xx(2, 4);
  zz << z.transpose(), zn.transpose();
  xx << b.x.transpose(), b.next.transpose();
  p["C"] = zz.transpose().completeOrthogonalDecomposition().solve(xx.transpose()).transpose();

  Matrix zu(2, 10);
  zu << z, b.u;
  const Matrix ab = zu.completeOrthogonalDecomposition().solve(zn).transpose(); // 8x10
  p["A"] = ab.leftCols(8);
  p["B"] = ab.rightCols(2);

  const auto l = koopman::si_losses(m, p, b);
  CHECK(l.reconstruction < 1e-10);
  CHECK(l.latent < 1e-10);
  CHECK(l.prediction < 1e-10);
}

TEST_CASE("early stopping rule") {
  ad::EarlyStopping s(25);
  CHECK_FALSE(s.update(0, 3.0));
  CHECK_FALSE(s.update(1, 2.0));
  int stopped_at = -1;
  for (int e = 2; e < 100; ++e)
    if (s.update(e, 2.0)) {
      stopped_at = e;
      break;
    }
  CHECK(stopped_at == 26);
  CHECK(s.best_epoch() == 1);
}

TEST_CASE("train_si") {
  KoopmanModel m;
  const auto data = random_action_transitions(500, 21);
  const cstr::TransitionSet train(data.begin(), data.begin() + 400);
  const cstr::TransitionSet val(data.begin() + 400, data.end());
  const auto init = m.init(8);

  SUBCASE("empty partitions are rejected") {
    CHECK_THROWS_AS((void)koopman::train_si(m, init, {}, val, {}, 1), cstr::ConfigError);
    CHECK_THROWS_AS((void)koopman::train_si(m, init, train, {}, {}, 1), cstr::ConfigError);
  }

  SUBCASE("deterministic per seed") {
    koopman::SiConfig cfg;
    cfg.max_epochs = 15;
    const auto a = koopman::train_si(m, init, train, val, cfg, 4);
    const auto b = koopman::train_si(m, init, train, val, cfg, 4);
    CHECK(a.history.val_loss == b.history.val_loss);
    CHECK(a.params.hash() == b.params.hash());
  }

  SUBCASE("validation prediction loss drops tenfold") {
    const double before = koopman::si_losses(m, init, cstr::to_scaled(val)).prediction;
    const auto r = koopman::train_si(m, init, train, val, {}, 4);
    const auto after = koopman::si_losses(m, r.params, cstr::to_scaled(val));
    MESSAGE("L_pred " << before << " -> " << after.prediction << " in "
                      << r.history.val_loss.size() << " epochs");
    CHECK(after.prediction <= 0.1 * before);
    for (std::size_t i = 1; i < r.history.best_val.size(); ++i)
      REQUIRE(r.history.best_val[i] <= r.history.best_val[i - 1]);
    CHECK(after.sum() == doctest::Approx(r.history.best_val.back()).epsilon(1e-12));
  }
}
