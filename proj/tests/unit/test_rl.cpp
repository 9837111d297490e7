#include "pimbpo/rl/ppo.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

using namespace pimbpo;
using rl::Matrix;

namespace {

std::shared_ptr<const cstr::PriceSeries> prices() {
  static const auto p = std::make_shared<const cstr::PriceSeries>(cstr::synthetic_prices());
  return p;
}

std::shared_ptr<const pinn::Ensemble> ensemble(int members, std::uint64_t seed = 3) {
  pinn::EnsembleConfig cfg;
  cfg.members = members;
  cfg.collocation_points = 50;
  cfg.init_points = 10;
  return std::make_shared<const pinn::Ensemble>(cfg, seed);
}

std::vector<cstr::SysState> steady_pool() { return {cstr::kSteadyState}; }

cstr::Observation random_observation(std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> u(-1, 1), l(0, 6), p(10, 80);
  Eigen::VectorXd pr(10);
  for (auto &v : pr) v = p(rng);
  return {Eigen::Vector2d(u(rng), u(rng)), l(rng), pr};
}

rl::RolloutStep step(double reward, double value, double next_value, bool terminated = false,
                     bool truncated = false) {
  rl::RolloutStep s;
  s.reward = reward;
  s.value = value;
  s.next_value = next_value;
  s.terminated = terminated;
  s.truncated = truncated;
  return s;
}

// Buffer of random observations with actions drawn around the current means.
rl::RolloutBuffer synthetic_buffer(const rl::PpoAgent &agent, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  rl::RolloutBuffer buf;
  std::normal_distribution<double> r(0, 1);
  for (int i = 0; i < n; ++i) {
    rl::RolloutStep s;
    s.obs = random_observation(rng);
    const Eigen::Vector2d mu = agent.policy().mean(s.obs);
    const rl::ActionSample a = rl::sample_action(mu, agent.sigma(), rng);
    s.action = a.raw;
    // Stored log-probs slightly off so ratios differ from one.
    s.log_prob = a.log_prob + 0.3 * r(rng);
    s.reward = r(rng);
    s.value = 0.0;
    s.next_value = 0.0;
    s.truncated = i % 8 == 7;
    buf.steps.push_back(s);
  }
  return buf;
}

double minibatch_loss(const rl::PpoAgent &agent, const rl::RolloutBuffer &buf, const rl::GaeResult &gae,
                      const std::vector<Eigen::Index> &rows, const rl::PpoConfig &cfg) {
  const auto g = rl::ppo_minibatch_gradients(agent, buf, gae, rows, cfg);
  return g.policy_loss + cfg.value_coef * g.value_loss;
}

ocp::MpcPolicy toy_mpc(std::uint64_t seed) {
  koopman::KoopmanModel model;
  ad::ParamVector p = model.init(seed);
  // A contractive lifted model keeps the toy plans well scaled.
  p["A"] = 0.6 * Matrix::Identity(8, 8);
  return ocp::MpcPolicy(model, p);
}

} // namespace

TEST_CASE("critic has the branched layout and scalar output") {
  const rl::BranchedNet net;
  const ad::ParamVector p = net.init(1);
  // Branches, then the 64-64-1 trunk.
  const Eigen::Index expected = (2 * 24 + 24 + 24 * 24 + 24) + (1 * 8 + 8 + 8 * 8 + 8) + (2 * 8 + 8 + 8 * 8 + 8) +
                                (10 * 24 + 24 + 24 * 24 + 24) + (64 * 64 + 64 + 64 * 64 + 64 + 64 + 1);
  CHECK(p.size() == expected);
  std::mt19937_64 rng(2);
  std::vector<cstr::Observation> obs;
  for (int i = 0; i < 5; ++i) obs.push_back(random_observation(rng));
  const Matrix f = rl::features(obs);
  CHECK(net.evaluate(p, f).rows() == 5);
  CHECK(net.evaluate(p, f).cols() == 1);
  const rl::MlpPolicy pol(4);
  CHECK(pol.net().evaluate(pol.params(), f).cols() == 2);
}

TEST_CASE("price features: spread is max minus min and survives shuffling") {
  std::mt19937_64 rng(3);
  const rl::BranchedNet net;
  const ad::ParamVector p = net.init(5);
  for (int trial = 0; trial < 20; ++trial) {
    cstr::Observation obs = random_observation(rng);
    const Eigen::RowVectorXd f = rl::features(obs);
    CHECK(f[3] == obs.prices[0]);
    CHECK(f[4] == obs.prices.maxCoeff() - obs.prices.minCoeff());
    CHECK(f[2] == obs.storage); // storage stays in hours

    cstr::Observation shuffled = obs;
    std::shuffle(shuffled.prices.begin() + 1, shuffled.prices.end(), rng);
    const Eigen::RowVectorXd g = rl::features(shuffled);
    CHECK(g[4] == f[4]);
    const Matrix hf = net.branch_output(p, rl::BranchedNet::Branch::Horizon, f);
    const Matrix hg = net.branch_output(p, rl::BranchedNet::Branch::Horizon, g);
    CHECK((hf - hg).norm() > 1e-6);
    CHECK(net.branch_output(p, rl::BranchedNet::Branch::PriceSummary, f) ==
          net.branch_output(p, rl::BranchedNet::Branch::PriceSummary, g));
  }
}

TEST_CASE("gaussian density integrates to one per dimension") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> mu(-1, 1), sd(0.02, 0.5);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Vector2d m(mu(rng), mu(rng));
    const Eigen::Vector2d s(sd(rng), sd(rng));
    for (int d = 0; d < 2; ++d) {
      const double lo = m[d] - 10 * s[d], hi = m[d] + 10 * s[d];
      const int n = 20000;
      const double h = (hi - lo) / n;
      double integral = 0.0;
      for (int i = 0; i <= n; ++i) {
        Eigen::Vector2d a = m;
        a[d] = lo + i * h;
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        integral += w * std::exp(ocp::gaussian_log_prob(a, m, s)[d]) * h;
      }
      CHECK(std::abs(integral - 1.0) < 1e-3);
    }
  }
}

TEST_CASE("sampling clips the action but scores the raw draw") {
  std::mt19937_64 rng(5);
  const Eigen::Vector2d mean(0.99, -0.99);
  const Eigen::Vector2d sigma(0.3, 0.3);
  bool saw_clip = false;
  for (int i = 0; i < 200; ++i) {
    const rl::ActionSample a = rl::sample_action(mean, sigma, rng);
    CHECK((a.clipped.array().abs() <= 1.0).all());
    CHECK(a.log_prob == doctest::Approx(rl::joint_log_prob(a.raw, mean, sigma)).epsilon(1e-14));
    saw_clip |= (a.raw - a.clipped).norm() > 0;
  }
  CHECK(saw_clip);
  const rl::ActionSample det = rl::sample_action(mean, Eigen::Vector2d::Zero(), rng);
  CHECK(det.raw == mean);
  CHECK(det.log_prob == 0.0);
}

TEST_CASE("GAE matches hand recursions") {
  SUBCASE("single transition") {
    rl::RolloutBuffer b;
    b.steps.push_back(step(2.5, 0.0, 0.0, true));
    const auto g = rl::compute_gae(b, 1.0, 1.0, false);
    CHECK(g.advantages[0] == 2.5);
    CHECK(g.returns[0] == 2.5);
  }
  SUBCASE("two-step episode") {
    const double gamma = 0.99, lambda = 0.95;
    rl::RolloutBuffer b;
    b.steps.push_back(step(1.0, 0.5, 0.8));
    b.steps.push_back(step(-2.0, 0.8, 0.0, true));
    const auto g = rl::compute_gae(b, gamma, lambda, false);
    const double d1 = -2.0 - 0.8;
    const double d0 = 1.0 + gamma * 0.8 - 0.5;
    CHECK(std::abs(g.advantages[1] - d1) < 1e-12);
    CHECK(std::abs(g.advantages[0] - (d0 + gamma * lambda * d1)) < 1e-12);
    CHECK(std::abs(g.returns[0] - (g.advantages[0] + 0.5)) < 1e-12);
  }
  SUBCASE("truncation bootstraps and stops the recursion") {
    rl::RolloutBuffer b;
    b.steps.push_back(step(1.0, 0.0, 3.0, false, true));
    b.steps.push_back(step(1.0, 0.0, 0.0, true));
    const auto g = rl::compute_gae(b, 0.9, 0.95, false);
    CHECK(std::abs(g.advantages[0] - (1.0 + 0.9 * 3.0)) < 1e-12);
    CHECK(g.advantages[1] == 1.0);
  }
  SUBCASE("buffer end bootstraps") {
    rl::RolloutBuffer b;
    b.steps.push_back(step(0.0, 1.0, 2.0));
    const auto g = rl::compute_gae(b, 0.5, 0.95, false);
    CHECK(g.advantages[0] == 0.0);
  }
  SUBCASE("normalization") {
    rl::RolloutBuffer b;
    std::mt19937_64 rng(6);
    std::normal_distribution<double> n(3, 2);
    for (int i = 0; i < 100; ++i) b.steps.push_back(step(n(rng), n(rng), n(rng), i % 7 == 6));
    const auto g = rl::compute_gae(b, 0.99, 0.95, true);
    CHECK(std::abs(g.advantages.mean()) < 1e-12);
    const double var = (g.advantages.array() - g.advantages.mean()).square().sum() / 99.0;
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-6);
  }
}

TEST_CASE("clipped surrogate picks the pessimistic branch") {
  const auto c = rl::clipped_surrogate(1.5, 2.0, 0.2);
  CHECK(c.value == doctest::Approx(1.2 * 2.0));
  CHECK(c.d_ratio == 0.0);
  CHECK(rl::clipped_surrogate(1.1, 2.0, 0.2).d_ratio == 2.0);
  CHECK(rl::clipped_surrogate(0.5, -1.0, 0.2).d_ratio == 0.0);
  CHECK(rl::clipped_surrogate(1.5, -1.0, 0.2).d_ratio == -1.0);
  CHECK(rl::clipped_surrogate(0.5, 1.0, 0.2).d_ratio == 1.0);
}

TEST_CASE("gradient norm clipping") {
  ad::ParamVector g;
  g.add("a", (Matrix(1, 2) << 3.0, 4.0).finished());
  ad::ParamVector a = g, b = g;
  CHECK(ad::clip_grad_norm(a, 0.5) == doctest::Approx(5.0));
  CHECK(a.norm() == doctest::Approx(0.5));
  // Joint clipping over two groups of norm 5 each.
  ad::ParamVector c = g;
  const double before = rl::clip_joint_grad_norm({&b, &c}, 0.5);
  CHECK(before == doctest::Approx(std::sqrt(50.0)));
  CHECK(std::hypot(b.norm(), c.norm()) == doctest::Approx(0.5));
  ad::ParamVector small = g;
  small["a"] *= 0.01;
  rl::clip_joint_grad_norm({&small}, 0.5);
  CHECK(small["a"](0, 0) == 0.03);
}

TEST_CASE("surrogate resets draw from the pool") {
  SUBCASE("single state pool") {
    rl::SurrogateEnv env(ensemble(1), steady_pool(), prices(), {}, 7);
    for (int i = 0; i < 50; ++i) {
      const auto obs = env.reset();
      CHECK(env.state().c == cstr::kSteadyState.c);
      CHECK(obs.prices.size() == 10);
      CHECK(obs.storage >= 1.0);
      CHECK(obs.storage <= 2.0);
    }
  }
  SUBCASE("two state pool is uniform") {
    const cstr::SysState a{0.1, 0.7}, b{0.2, 0.8};
    rl::SurrogateEnv env(ensemble(1), {a, b}, prices(), {}, 8);
    int hits = 0;
    for (int i = 0; i < 10000; ++i) {
      env.reset();
      hits += env.state().c == a.c ? 1 : 0;
    }
    CHECK(std::abs(hits / 10000.0 - 0.5) <= 0.03);
  }
  SUBCASE("empty pool") {
    CHECK_THROWS_AS(rl::SurrogateEnv(ensemble(1), {}, prices(), {}, 1), cstr::ConfigError);
  }
  SUBCASE("price windows come from the training partition") {
    rl::SurrogateEnv env(ensemble(1), steady_pool(), prices(), {}, 9);
    const auto &series = *prices();
    const double cutoff = series.eval_start;
    for (int i = 0; i < 200; ++i) {
      const auto obs = env.reset();
      const auto first = std::find(series.prices.begin(), series.prices.end(), obs.prices[0]);
      CHECK(first - series.prices.begin() < cutoff);
    }
  }
}

TEST_CASE("surrogate episodes last at most eight steps") {
  rl::SurrogateEnv env(ensemble(3), steady_pool(), prices(), {}, 10);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int ep = 0; ep < 300; ++ep) {
    env.reset();
    int n = 0;
    rl::SurrogateStep s;
    while (!env.done()) {
      s = env.step({u(rng), u(rng)});
      ++n;
    }
    CHECK(n <= 8);
    if (n == 8 && !s.terminated) CHECK(s.truncated);
    if (n < 8) CHECK(s.terminated);
  }
}

TEST_CASE("surrogate member selection is uniform and pinning is deterministic") {
  rl::SurrogateEnv env(ensemble(10), steady_pool(), prices(), {}, 12);
  std::vector<int> counts(10, 0);
  const int steps = 100000;
  env.reset();
  for (int i = 0; i < steps; ++i) {
    if (env.done()) env.reset();
    counts[env.step(cstr::scale_action(cstr::kSteadyAction)).member] += 1;
  }
  for (int c : counts) CHECK(std::abs(c / static_cast<double>(steps) - 0.1) <= 0.1 * 0.02 + 0.001);

  // One member: the surrogate is a deterministic map.
  const auto one = ensemble(1, 4);
  rl::SurrogateEnv e1(one, steady_pool(), prices(), {}, 1), e2(one, steady_pool(), prices(), {}, 99);
  e1.reset();
  e2.reset();
  const Eigen::Vector2d u(0.3, -0.2);
  const auto s1 = e1.step(u), s2 = e2.step(u);
  CHECK(s1.observation.x_scaled == s2.observation.x_scaled);

  rl::SurrogateEnv pinned(ensemble(10), steady_pool(), prices(), {}, 13, 4);
  pinned.reset();
  CHECK(pinned.step(u).member == 4);
}

TEST_CASE("minibatch gradients match finite differences") {
  rl::PpoConfig cfg;
  rl::PpoAgent agent(std::make_unique<rl::MlpPolicy>(21), cfg, 22);
  const rl::RolloutBuffer buf = synthetic_buffer(agent, 24, 23);
  const rl::GaeResult gae = rl::compute_gae(buf, cfg.gamma, cfg.gae_lambda, true);
  std::vector<Eigen::Index> rows(24);
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  const auto g = rl::ppo_minibatch_gradients(agent, buf, gae, rows, cfg);
  REQUIRE(g.finite);

  const double h = 1e-6;
  auto check_block = [&](ad::ParamVector &params, const ad::ParamVector &grad, const std::string &name, int probes) {
    std::mt19937_64 rng(24);
    for (int k = 0; k < probes; ++k) {
      Matrix &blk = params[name];
      const auto i = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(blk.size()));
      const double orig = blk.data()[i];
      blk.data()[i] = orig + h;
      const double up = minibatch_loss(agent, buf, gae, rows, cfg);
      blk.data()[i] = orig - h;
      const double down = minibatch_loss(agent, buf, gae, rows, cfg);
      blk.data()[i] = orig;
      const double fd = (up - down) / (2 * h);
      const double an = grad[name].data()[i];
      CHECK(std::abs(fd - an) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  };
  check_block(agent.log_std(), g.log_std, "log_std", 2);
  check_block(agent.policy().params(), g.policy, "pi.t.W2", 6);
  check_block(agent.policy().params(), g.policy, "pi.h.W0", 6);
  check_block(agent.critic_params(), g.critic, "v.t.W2", 6);
  check_block(agent.critic_params(), g.critic, "v.x.W0", 6);
}

TEST_CASE("zero advantages leave the policy untouched") {
  rl::PpoConfig cfg;
  cfg.minibatch = 16;
  cfg.epochs = 3;
  rl::PpoAgent agent(std::make_unique<rl::MlpPolicy>(31), cfg, 32);
  rl::RolloutBuffer buf = synthetic_buffer(agent, 48, 33);
  rl::GaeResult gae = rl::compute_gae(buf, cfg.gamma, cfg.gae_lambda, false);
  gae.advantages.setZero();
  const auto pol = agent.policy().params().hash();
  const auto ls = agent.log_std().hash();
  const auto critic = agent.critic_params().hash();
  std::mt19937_64 rng(34);
  const auto st = rl::ppo_update(agent, buf, gae, cfg, rng);
  CHECK(st.minibatches == 9);
  CHECK(agent.policy().params().hash() == pol);
  CHECK(agent.log_std().hash() == ls);
  CHECK(agent.critic_params().hash() != critic);
}

TEST_CASE("positive advantage pulls the mean toward the action") {
  rl::PpoConfig cfg;
  cfg.minibatch = 32;
  cfg.epochs = 5;
  rl::PpoAgent agent(std::make_unique<rl::MlpPolicy>(41), cfg, 42);
  std::mt19937_64 rng(43);
  const cstr::Observation obs = random_observation(rng);
  const Eigen::Vector2d mu0 = agent.policy().mean(obs);
  rl::RolloutBuffer buf;
  for (int i = 0; i < 32; ++i) {
    rl::RolloutStep s;
    s.obs = obs;
    s.action = mu0 + Eigen::Vector2d(0.05, -0.05);
    s.log_prob = rl::joint_log_prob(s.action, mu0, agent.sigma());
    buf.steps.push_back(s);
  }
  rl::GaeResult gae;
  gae.advantages = Eigen::VectorXd::Ones(32);
  gae.returns = Eigen::VectorXd::Zero(32);
  rl::ppo_update(agent, buf, gae, cfg, rng);
  const Eigen::Vector2d mu1 = agent.policy().mean(obs);
  CHECK(mu1[0] > mu0[0]);
  CHECK(mu1[1] < mu0[1]);
}

TEST_CASE("non-finite losses skip the minibatch") {
  rl::PpoConfig cfg;
  cfg.minibatch = 8;
  cfg.epochs = 1;
  rl::PpoAgent agent(std::make_unique<rl::MlpPolicy>(51), cfg, 52);
  rl::RolloutBuffer buf = synthetic_buffer(agent, 8, 53);
  rl::GaeResult gae = rl::compute_gae(buf, cfg.gamma, cfg.gae_lambda, true);
  gae.returns[3] = std::numeric_limits<double>::quiet_NaN();
  const auto before = agent.critic_params().hash();
  std::mt19937_64 rng(54);
  const auto st = rl::ppo_update(agent, buf, gae, cfg, rng);
  CHECK(st.skipped_minibatches == 1);
  CHECK(st.minibatches == 0);
  CHECK(agent.critic_params().hash() == before);
}

TEST_CASE("eNMPC policy gradient assembles the bound Jacobians") {
  rl::MpcBoundsPolicy pol(toy_mpc(61));
  ocp::BoundParams th;
  th.c_lower = 0.1;
  th.T_upper = -0.05;
  pol.set_theta(th);
  CHECK(pol.theta().c_lower == 0.1);
  std::mt19937_64 rng(62);
  std::vector<cstr::Observation> obs;
  for (int i = 0; i < 4; ++i) obs.push_back(random_observation(rng));
  const rl::MeanBatch mb = pol.means(obs, true);
  Matrix dm(4, 2);
  std::normal_distribution<double> n(0, 1);
  for (Eigen::Index i = 0; i < dm.size(); ++i) dm.data()[i] = n(rng);
  const ad::ParamVector g = mb.vjp(dm);
  Eigen::Matrix<double, 6, 1> expected = Eigen::Matrix<double, 6, 1>::Zero();
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto m = pol.mpc().mean(obs[i], th, true);
    CHECK((m.u.transpose() - mb.means.row(static_cast<Eigen::Index>(i))).norm() == 0.0);
    expected += m.du_dtheta.transpose() * dm.row(static_cast<Eigen::Index>(i)).transpose();
  }
  CHECK((g["theta_B"].transpose() - expected).norm() <= 1e-14 * std::max(1.0, expected.norm()));
}

TEST_CASE("improvement ratio rule") {
  SUBCASE("fresh history counts as improving") {
    rl::ImprovementTracker t(10);
    const auto c = t.record(5, std::vector<double>(10, -3.0));
    CHECK(c.ratio == 1.0);
    CHECK_FALSE(c.terminate);
  }
  SUBCASE("seven of ten continues, six of ten stops") {
    for (int improving : {7, 6}) {
      rl::ImprovementTracker t(10);
      t.record(5, std::vector<double>(10, 0.0));
      // Five stale checks push the first best out of the 25-iteration window.
      for (int it = 10; it <= 30; it += 5) {
        std::vector<double> avg(10, -1.0);
        for (int e = 0; e < improving; ++e) avg[static_cast<std::size_t>(e)] = it;
        const auto c = t.record(it, avg);
        if (it == 30) {
          CHECK(c.ratio == doctest::Approx(improving / 10.0));
          CHECK(c.terminate == (improving == 6));
        }
      }
    }
  }
  SUBCASE("a best renewed 20 iterations ago still counts") {
    rl::ImprovementTracker t(1);
    t.record(5, {1.0});
    CHECK_FALSE(t.record(25, {0.0}).terminate);
    CHECK(t.record(30, {0.0}).terminate);
  }
}

TEST_CASE("average episode reward is reproducible for a fixed seed") {
  rl::SurrogateEnv env(ensemble(2), steady_pool(), prices(), {}, 71, 0);
  const rl::MlpPolicy pol(72);
  const double a = rl::average_episode_reward(pol, env, 3, 5);
  const double b = rl::average_episode_reward(pol, env, 3, 5);
  CHECK(a == b);
  CHECK(std::isfinite(a));
}

TEST_CASE("policy optimization leaves models alone and logs every iteration") {
  auto ens = ensemble(2, 81);
  std::vector<std::uint64_t> member_hashes;
  for (std::size_t i = 0; i < ens->size(); ++i) member_hashes.push_back(ens->member(i).params.hash());
  // Tight upper offsets put state bounds into play so theta_B gets gradient.
  ocp::BoundParams tight;
  tight.c_upper = -0.8;
  tight.T_upper = -0.8;
  rl::MpcBoundsPolicy mpc(toy_mpc(82), tight);
  const auto theta_k = mpc.mpc().theta_k().hash();

  rl::PolicyOptimizationConfig cfg;
  cfg.ppo.steps_per_iteration = 32;
  cfg.ppo.minibatch = 16;
  cfg.ppo.epochs = 2;
  cfg.improvement.episodes = 1;
  cfg.max_iterations = 6;
  rl::PpoAgent agent(std::make_unique<rl::MpcBoundsPolicy>(mpc), cfg.ppo, 83);
  rl::SurrogateEnv env(ens, steady_pool(), prices(), {}, 84);
  std::vector<rl::SurrogateEnv> val;
  for (std::size_t i = 0; i < ens->size(); ++i) val.emplace_back(ens, steady_pool(), prices(), rl::SurrogateConfig{}, 85, i);
  std::mt19937_64 rng(86);
  std::ostringstream csv;
  rl::write_metrics_csv_header(csv);
  const auto before = agent.policy().params().hash();
  const auto res = rl::optimize_policy(agent, env, val, cfg, rng,
                                       [&](const rl::PpoIterationStats &s) { rl::write_metrics_csv_row(csv, s); });
  CHECK(res.iterations == 6);
  CHECK_FALSE(res.stopped_by_ratio);
  CHECK(res.history[4].check.has_value());
  CHECK(res.history[4].check->ratio == 1.0);
  CHECK(agent.policy().params().hash() != before);
  const auto &trained = dynamic_cast<const rl::MpcBoundsPolicy &>(agent.policy());
  CHECK(trained.mpc().theta_k().hash() == theta_k);
  for (std::size_t i = 0; i < ens->size(); ++i) CHECK(ens->member(i).params.hash() == member_hashes[i]);
  const std::string text = csv.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 7);
  CHECK(rl::to_json(res.history[4]).contains("improvement"));
}

TEST_CASE("agent copies are deep") {
  rl::PpoConfig cfg;
  rl::PpoAgent a(std::make_unique<rl::MlpPolicy>(91), cfg, 92);
  rl::PpoAgent b = a;
  b.policy().params()["pi.t.W0"](0, 0) += 1.0;
  CHECK(a.policy().params().hash() != b.policy().params().hash());
  CHECK(a.sigma().isApprox(Eigen::Vector2d::Constant(0.05)));
  CHECK(rl::ppo_config_from_json(rl::to_json(cfg)).epochs == 10);
}
