#include "pimbpo/bench/evaluate.hpp"

#include <cmath>
#include <stdexcept>

namespace pimbpo::bench {

namespace {

Summary summarize(const std::vector<double> &v) {
  Summary s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  for (double x : v) s.std += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(s.std / static_cast<double>(v.size()));
  return s;
}

void fill_summaries(EvalMetrics &m) {
  std::vector<double> r, v, c;
  for (const EpisodeMetrics &e : m.episodes) {
    r.push_back(e.total_reward);
    v.push_back(e.violations);
    c.push_back(e.relative_cost);
  }
  m.reward = summarize(r);
  m.violations = summarize(v);
  m.relative_cost = summarize(c);
}

nlohmann::json summary_json(const Summary &s) { return {{"mean", s.mean}, {"std", s.std}}; }

} // namespace

nlohmann::json to_json(const EvalConfig &c) {
  return {{"episodes", c.episodes}, {"steps", c.steps}, {"initial_storage", c.initial_storage}};
}

EvalConfig eval_config_from_json(const nlohmann::json &j) {
  EvalConfig c;
  c.episodes = j.value("episodes", c.episodes);
  c.steps = j.value("steps", c.steps);
  c.initial_storage = j.value("initial_storage", c.initial_storage);
  if (c.episodes < 1 || c.steps < 1) throw std::invalid_argument("evaluation needs positive episodes and steps");
  return c;
}

std::vector<std::size_t> test_windows(const cstr::PriceSeries &prices, const EvalConfig &config) {
  const cstr::EnvConfig env;
  return cstr::consecutive_windows(prices, cstr::Partition::Eval, static_cast<std::size_t>(config.episodes),
                                   static_cast<std::size_t>(config.steps + env.forecast_length));
}

double nominal_cost(const cstr::PriceSeries &prices, std::size_t window_start, int steps) {
  double c = 0.0;
  for (int t = 0; t < steps; ++t) c += prices.prices.at(window_start + static_cast<std::size_t>(t)) * cstr::kCoolant.ss;
  return c;
}

EvalMetrics evaluate(const rl::Policy &controller, const cstr::PriceSeries &prices, const EvalConfig &config) {
  auto shared = std::make_shared<const cstr::PriceSeries>(prices);
  cstr::EnvConfig env_config;
  env_config.max_steps = config.steps;
  env_config.terminate_on_violation = false;
  env_config.partition = cstr::Partition::Eval;
  EvalMetrics out;
  for (std::size_t start : test_windows(prices, config)) {
    cstr::CstrEnv env(env_config, shared, 0);
    env.reset_at(start, config.initial_storage);
    EpisodeMetrics e;
    e.window_start = start;
    while (!env.state().done) {
      const Eigen::Vector2d u = controller.mean(env.observe());
      const cstr::StepResult r = env.step(cstr::unscale_action(u.cwiseMax(-1.0).cwiseMin(1.0)));
      e.total_reward += r.reward.total;
      e.violations += r.violations.any() ? 1 : 0;
      e.cost += r.price * r.applied.F;
      ++e.steps;
    }
    e.nominal_cost = nominal_cost(prices, start, e.steps);
    e.relative_cost = e.cost / e.nominal_cost;
    out.episodes.push_back(e);
  }
  fill_summaries(out);
  return out;
}

EvalMetrics pool(const std::vector<EvalMetrics> &runs) {
  EvalMetrics out;
  for (const EvalMetrics &m : runs) out.episodes.insert(out.episodes.end(), m.episodes.begin(), m.episodes.end());
  fill_summaries(out);
  return out;
}

nlohmann::json to_json(const EvalMetrics &m) {
  nlohmann::json eps = nlohmann::json::array();
  for (const EpisodeMetrics &e : m.episodes)
    eps.push_back({{"window_start", e.window_start},
                   {"steps", e.steps},
                   {"total_reward", e.total_reward},
                   {"violations", e.violations},
                   {"cost", e.cost},
                   {"nominal_cost", e.nominal_cost},
                   {"relative_cost", e.relative_cost}});
  return {{"episodes", eps},
          {"reward", summary_json(m.reward)},
          {"violations", summary_json(m.violations)},
          {"relative_cost", summary_json(m.relative_cost)}};
}

} // namespace pimbpo::bench
