#include "pimbpo/rl/ppo.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace pimbpo::rl {

nlohmann::json to_json(const PpoConfig &c) {
  return {{"steps_per_iteration", c.steps_per_iteration},
          {"minibatch", c.minibatch},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"adam_epsilon", c.adam_epsilon},
          {"max_grad_norm", c.max_grad_norm},
          {"clip_ratio", c.clip_ratio},
          {"gamma", c.gamma},
          {"gae_lambda", c.gae_lambda},
          {"value_coef", c.value_coef},
          {"initial_log_std", c.initial_log_std},
          {"normalize_advantages", c.normalize_advantages}};
}

PpoConfig ppo_config_from_json(const nlohmann::json &j) {
  PpoConfig c;
  c.steps_per_iteration = j.value("steps_per_iteration", c.steps_per_iteration);
  c.minibatch = j.value("minibatch", c.minibatch);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
  c.clip_ratio = j.value("clip_ratio", c.clip_ratio);
  c.gamma = j.value("gamma", c.gamma);
  c.gae_lambda = j.value("gae_lambda", c.gae_lambda);
  c.value_coef = j.value("value_coef", c.value_coef);
  c.initial_log_std = j.value("initial_log_std", c.initial_log_std);
  c.normalize_advantages = j.value("normalize_advantages", c.normalize_advantages);
  if (c.steps_per_iteration < 1 || c.minibatch < 1 || c.epochs < 1)
    throw std::invalid_argument("PPO steps, minibatch and epochs must be positive");
  return c;
}

GaeResult compute_gae(const RolloutBuffer &buffer, double gamma, double lambda, bool normalize) {
  const auto n = static_cast<Eigen::Index>(buffer.size());
  GaeResult out;
  out.advantages.resize(n);
  out.returns.resize(n);
  double next_adv = 0.0;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const RolloutStep &s = buffer.steps[static_cast<std::size_t>(t)];
    const bool cut = s.terminated || s.truncated || t == n - 1;
    const double delta = s.reward + gamma * s.next_value - s.value;
    const double adv = delta + (cut ? 0.0 : gamma * lambda * next_adv);
    out.advantages[t] = adv;
    out.returns[t] = adv + s.value;
    next_adv = adv;
  }
  if (normalize && n > 1) {
    const double mean = out.advantages.mean();
    const double var = (out.advantages.array() - mean).square().sum() / static_cast<double>(n - 1);
    out.advantages = (out.advantages.array() - mean) / (std::sqrt(var) + 1e-8);
  }
  return out;
}

ClippedSurrogate clipped_surrogate(double ratio, double advantage, double clip) {
  const double unclipped = ratio * advantage;
  const double bounded = std::clamp(ratio, 1.0 - clip, 1.0 + clip) * advantage;
  if (unclipped <= bounded) return {unclipped, advantage};
  return {bounded, 0.0};
}

namespace {

ad::AdamConfig adam_config(const PpoConfig &c) {
  ad::AdamConfig a;
  a.learning_rate = c.learning_rate;
  a.epsilon = c.adam_epsilon;
  return a;
}

} // namespace

PpoAgent::PpoAgent(std::unique_ptr<Policy> policy, const PpoConfig &config, std::uint64_t critic_seed)
    : policy_(std::move(policy)), critic_("v.", 1), critic_params_(critic_.init(critic_seed)) {
  if (!policy_) throw std::invalid_argument("PpoAgent needs a policy");
  log_std_.add("log_std", Matrix::Constant(1, 2, config.initial_log_std));
  policy_adam = ad::AdamState(adam_config(config), policy_->params());
  log_std_adam = ad::AdamState(adam_config(config), log_std_);
  critic_adam = ad::AdamState(adam_config(config), critic_params_);
}

PpoAgent::PpoAgent(const PpoAgent &other)
    : policy_adam(other.policy_adam), log_std_adam(other.log_std_adam), critic_adam(other.critic_adam),
      policy_(other.policy_->clone()), log_std_(other.log_std_), critic_(other.critic_),
      critic_params_(other.critic_params_) {}

PpoAgent &PpoAgent::operator=(const PpoAgent &other) {
  if (this != &other) {
    PpoAgent copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void PpoAgent::replace_policy(std::unique_ptr<Policy> policy) {
  if (!policy || !policy->params().same_layout(policy_->params()))
    throw std::invalid_argument("replacement policy must share the parameter layout");
  policy_ = std::move(policy);
}

Eigen::Vector2d PpoAgent::sigma() const { return log_std_["log_std"].row(0).transpose().array().exp(); }

Eigen::VectorXd PpoAgent::values(const std::vector<cstr::Observation> &obs) const {
  if (obs.empty()) return {};
  return critic_.evaluate(critic_params_, features(obs)).col(0);
}

RolloutBuffer collect_rollout(const PpoAgent &agent, SurrogateEnv &env, int steps, std::mt19937_64 &rng) {
  RolloutBuffer buf;
  buf.steps.reserve(static_cast<std::size_t>(steps));
  std::vector<cstr::Observation> next_obs;
  next_obs.reserve(static_cast<std::size_t>(steps));
  const Eigen::Vector2d sigma = agent.sigma();
  cstr::Observation obs = env.done() ? env.reset() : env.observe();
  double episode_return = 0.0;
  for (int t = 0; t < steps; ++t) {
    const MeanBatch m = agent.policy().means({obs}, false);
    buf.solver_failures += m.solver_failures;
    const ActionSample a = sample_action(m.means.row(0).transpose(), sigma, rng);
    const SurrogateStep s = env.step(a.clipped);
    RolloutStep rs;
    rs.obs = obs;
    rs.action = a.raw;
    rs.log_prob = a.log_prob;
    rs.reward = s.reward.total;
    rs.terminated = s.terminated;
    rs.truncated = s.truncated;
    buf.diverged_steps += s.diverged ? 1 : 0;
    buf.steps.push_back(std::move(rs));
    next_obs.push_back(s.observation);
    episode_return += s.reward.total;
    if (env.done()) {
      ++buf.episodes_finished;
      buf.finished_return_sum += episode_return;
      episode_return = 0.0;
      obs = env.reset();
    } else {
      obs = s.observation;
    }
  }
  std::vector<cstr::Observation> current;
  current.reserve(buf.steps.size());
  for (const RolloutStep &s : buf.steps) current.push_back(s.obs);
  const Eigen::VectorXd v = agent.values(current);
  const Eigen::VectorXd nv = agent.values(next_obs);
  for (std::size_t i = 0; i < buf.steps.size(); ++i) {
    buf.steps[i].value = v[static_cast<Eigen::Index>(i)];
    buf.steps[i].next_value = buf.steps[i].terminated ? 0.0 : nv[static_cast<Eigen::Index>(i)];
  }
  return buf;
}

double clip_joint_grad_norm(std::vector<ParamVector *> groups, double max_norm) {
  double sq = 0.0;
  for (const ParamVector *g : groups) {
    const double n = g->norm();
    sq += n * n;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double k = max_norm / norm;
    for (ParamVector *g : groups)
      for (ad::ParamBlock &b : g->blocks()) b.value *= k;
  }
  return norm;
}

MinibatchGradients ppo_minibatch_gradients(const PpoAgent &agent, const RolloutBuffer &buffer, const GaeResult &gae,
                                           const std::vector<Eigen::Index> &rows, const PpoConfig &config) {
  MinibatchGradients out;
  const auto b = static_cast<Eigen::Index>(rows.size());
  const double inv_b = 1.0 / static_cast<double>(b);
  std::vector<cstr::Observation> obs;
  obs.reserve(rows.size());
  for (Eigen::Index r : rows) obs.push_back(buffer.steps[static_cast<std::size_t>(r)].obs);

  const MeanBatch mb = agent.policy().means(obs, true);
  out.solver_failures = mb.solver_failures;
  const Eigen::Vector2d sigma = agent.sigma();

  Matrix dmeans(b, 2);
  Eigen::Vector2d dlog_std = Eigen::Vector2d::Zero();
  for (Eigen::Index j = 0; j < b; ++j) {
    const RolloutStep &s = buffer.steps[static_cast<std::size_t>(rows[static_cast<std::size_t>(j)])];
    const Eigen::Vector2d mu = mb.means.row(j).transpose();
    const double r = std::exp(joint_log_prob(s.action, mu, sigma) - s.log_prob);
    const ClippedSurrogate cs =
        clipped_surrogate(r, gae.advantages[rows[static_cast<std::size_t>(j)]], config.clip_ratio);
    out.policy_loss -= cs.value * inv_b;
    // d(-surrogate)/d(log pi) = -dS/dr * r
    const double dlp = -cs.d_ratio * r * inv_b;
    const Eigen::Vector2d z = (s.action - mu).cwiseQuotient(sigma);
    dmeans.row(j) = (dlp * z.cwiseQuotient(sigma)).transpose();
    dlog_std += dlp * (z.array().square() - 1.0).matrix();
    out.approx_kl += ((r - 1.0) - std::log(r)) * inv_b;
    out.clip_fraction += (std::abs(r - 1.0) > config.clip_ratio ? 1.0 : 0.0) * inv_b;
  }

  ad::Tape tape;
  ad::TapeParams cp(tape, agent.critic_params());
  Eigen::VectorXd targets(b);
  for (Eigen::Index j = 0; j < b; ++j) targets[j] = gae.returns[rows[static_cast<std::size_t>(j)]];
  const ad::Var v = agent.critic().forward(cp, tape.constant(features(obs)));
  const ad::Var vl = ad::mean(ad::square(v - tape.constant(targets)));
  out.value_loss = vl.scalar();

  out.finite = std::isfinite(out.policy_loss) && std::isfinite(out.value_loss) && dmeans.allFinite() &&
               dlog_std.allFinite();
  if (!out.finite) return out;
  out.critic = cp.gradient(tape.backward(vl));
  for (ad::ParamBlock &blk : out.critic.blocks()) blk.value *= config.value_coef;
  out.policy = mb.vjp(dmeans);
  out.log_std = agent.log_std().zeros_like();
  out.log_std["log_std"] = dlog_std.transpose();
  out.finite = out.policy.all_finite() && out.critic.all_finite();
  return out;
}

UpdateStats ppo_update(PpoAgent &agent, const RolloutBuffer &buffer, const GaeResult &gae, const PpoConfig &config,
                       std::mt19937_64 &rng) {
  UpdateStats st;
  const auto n = static_cast<Eigen::Index>(buffer.size());
  if (n == 0) return st;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  double grad_norm_sum = 0.0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += config.minibatch) {
      const Eigen::Index b = std::min<Eigen::Index>(config.minibatch, n - start);
      const std::vector<Eigen::Index> rows(order.begin() + start, order.begin() + start + b);
      MinibatchGradients g = ppo_minibatch_gradients(agent, buffer, gae, rows, config);
      st.solver_failures += g.solver_failures;
      if (!g.finite) {
        ++st.skipped_minibatches;
        continue;
      }
      grad_norm_sum += clip_joint_grad_norm({&g.policy, &g.log_std, &g.critic}, config.max_grad_norm);
      ad::adam_step(agent.policy_adam, agent.policy().params(), g.policy);
      ad::adam_step(agent.log_std_adam, agent.log_std(), g.log_std);
      ad::adam_step(agent.critic_adam, agent.critic_params(), g.critic);
      st.policy_loss += g.policy_loss;
      st.value_loss += g.value_loss;
      st.approx_kl += g.approx_kl;
      st.clip_fraction += g.clip_fraction;
      ++st.minibatches;
    }
  }
  if (st.minibatches > 0) {
    const double k = 1.0 / st.minibatches;
    st.policy_loss *= k;
    st.value_loss *= k;
    st.approx_kl *= k;
    st.clip_fraction *= k;
    st.grad_norm = grad_norm_sum * k;
  }
  return st;
}

void write_metrics_csv_header(std::ostream &os) {
  os << "iteration,steps,episodes,mean_step_reward,mean_episode_return,policy_loss,value_loss,approx_kl,"
        "clip_fraction,grad_norm,minibatches,skipped_minibatches,solver_failures,sigma_rho,sigma_F,"
        "improvement_ratio,terminate\n";
}

void write_metrics_csv_row(std::ostream &os, const PpoIterationStats &s) {
  const auto prec = os.precision(10);
  os << s.iteration << ',' << s.steps << ',' << s.episodes << ',' << s.mean_step_reward << ','
     << s.mean_episode_return << ',' << s.update.policy_loss << ',' << s.update.value_loss << ','
     << s.update.approx_kl << ',' << s.update.clip_fraction << ',' << s.update.grad_norm << ','
     << s.update.minibatches << ',' << s.update.skipped_minibatches << ',' << s.update.solver_failures << ','
     << s.sigma[0] << ',' << s.sigma[1] << ',';
  if (s.check) os << s.check->ratio << ',' << (s.check->terminate ? 1 : 0);
  else os << ',';
  os << '\n';
  os.precision(prec);
}

nlohmann::json to_json(const PpoIterationStats &s) {
  nlohmann::json j = {{"iteration", s.iteration},
                      {"steps", s.steps},
                      {"episodes", s.episodes},
                      {"mean_step_reward", s.mean_step_reward},
                      {"policy_loss", s.update.policy_loss},
                      {"value_loss", s.update.value_loss},
                      {"approx_kl", s.update.approx_kl},
                      {"clip_fraction", s.update.clip_fraction},
                      {"grad_norm", s.update.grad_norm},
                      {"minibatches", s.update.minibatches},
                      {"skipped_minibatches", s.update.skipped_minibatches},
                      {"solver_failures", s.update.solver_failures},
                      {"sigma", {s.sigma[0], s.sigma[1]}}};
  j["mean_episode_return"] = std::isfinite(s.mean_episode_return) ? nlohmann::json(s.mean_episode_return) : nullptr;
  if (s.check) {
    j["improvement"] = {{"ratio", s.check->ratio},
                        {"terminate", s.check->terminate},
                        {"averages", s.check->averages},
                        {"improving", s.check->improving}};
  }
  return j;
}

PolicyOptimizationResult optimize_policy(PpoAgent &agent, SurrogateEnv &env, std::vector<SurrogateEnv> &validation,
                                         const PolicyOptimizationConfig &config, std::mt19937_64 &rng,
                                         const std::function<void(const PpoIterationStats &)> &sink) {
  if (validation.empty()) throw std::invalid_argument("policy optimization needs validation environments");
  PolicyOptimizationResult out;
  ImprovementTracker tracker(validation.size(), config.improvement);
  for (int it = 1; it <= config.max_iterations; ++it) {
    const RolloutBuffer buf = collect_rollout(agent, env, config.ppo.steps_per_iteration, rng);
    const GaeResult gae = compute_gae(buf, config.ppo.gamma, config.ppo.gae_lambda, config.ppo.normalize_advantages);
    PpoIterationStats s;
    s.iteration = it;
    s.steps = static_cast<int>(buf.size());
    s.episodes = buf.episodes_finished;
    double reward_sum = 0.0;
    for (const RolloutStep &r : buf.steps) reward_sum += r.reward;
    s.mean_step_reward = reward_sum / static_cast<double>(std::max<std::size_t>(1, buf.size()));
    if (buf.episodes_finished > 0) s.mean_episode_return = buf.finished_return_sum / buf.episodes_finished;
    s.update = ppo_update(agent, buf, gae, config.ppo, rng);
    s.update.solver_failures += buf.solver_failures;
    s.sigma = agent.sigma();
    if (it % config.improvement.check_every == 0) {
      std::vector<double> averages;
      for (std::size_t e = 0; e < validation.size(); ++e)
        averages.push_back(average_episode_reward(agent.policy(), validation[e], config.improvement.episodes,
                                                  config.improvement.seed + e));
      s.check = tracker.record(it, averages);
    }
    out.history.push_back(s);
    out.iterations = it;
    if (sink) sink(s);
    if (s.check && s.check->terminate) {
      out.stopped_by_ratio = true;
      break;
    }
  }
  return out;
}

} // namespace pimbpo::rl
