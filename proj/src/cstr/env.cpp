#include "pimbpo/cstr/env.hpp"

#include "pimbpo/diff/errors.hpp"

#include <algorithm>
#include <string>

namespace pimbpo::cstr {

namespace {

double excess(double scaled) { return std::max(0.0, scaled - 1.0) + std::max(0.0, -1.0 - scaled); }

} // namespace

Violations measure_violations(const SysState &x, double storage) {
  Violations v;
  v.c = excess(kConcentration.scale(x.c));
  v.T = excess(kTemperature.scale(x.T));
  v.storage = std::max(0.0, storage - kStorage.ub) + std::max(0.0, kStorage.lb - storage);
  return v;
}

RewardBreakdown compute_reward(const Action &prev_action, double prev_price, const SysState &x,
                               double storage, const RewardConfig &config) {
  const Violations v = measure_violations(x, storage);
  RewardBreakdown r;
  r.cost = (kCoolant.ss - prev_action.F) * prev_price * 1.0;
  r.con_rel = config.violation_weight * (v.c * v.c + v.T * v.T + v.storage * v.storage);
  r.con_bool = v.any() ? config.violation_flag_penalty : 0.0;
  r.total = config.cost_weight * r.cost - r.con_rel - r.con_bool + config.survival_bonus;
  return r;
}

bool outsized_violation(const Violations &v, double limit) { return v.c > limit || v.T > limit; }

CstrEnv::CstrEnv(EnvConfig config, std::shared_ptr<const PriceSeries> prices, std::uint64_t seed)
    : config_(std::move(config)), prices_(std::move(prices)), rng_(seed) {
  if (!prices_) throw ConfigError("environment needs a price series");
  if (config_.max_steps < 1 || config_.forecast_length < 1)
    throw ConfigError("max_steps and forecast_length must be positive");
  if (prices_->size(config_.partition) < config_.window_length())
    throw ConfigError("price partition has " + std::to_string(prices_->size(config_.partition)) +
                      " hours; an episode needs " + std::to_string(config_.window_length()));
}

const EnvState &CstrEnv::reset() {
  const std::size_t first = prices_->begin(config_.partition);
  const std::size_t last = prices_->end(config_.partition) - config_.window_length();
  std::uniform_int_distribution<std::size_t> pick(first, last);
  const std::size_t start = pick(rng_);
  return reset_at(start);
}

const EnvState &CstrEnv::reset_at(std::size_t window_start, std::optional<double> storage) {
  if (window_start < prices_->begin(config_.partition) ||
      window_start + config_.window_length() > prices_->end(config_.partition))
    throw ConfigError("price window at " + std::to_string(window_start) + " leaves the active partition");
  state_ = EnvState{};
  state_.x = kSteadyState;
  if (storage) {
    state_.storage = *storage;
  } else {
    std::uniform_real_distribution<double> level(config_.storage_reset_low, config_.storage_reset_high);
    state_.storage = level(rng_);
  }
  state_.window_start = window_start;
  state_.step = 0;
  state_.done = false;
  return state_;
}

double CstrEnv::current_price() const {
  return prices_->prices[state_.window_start + static_cast<std::size_t>(state_.step)];
}

Eigen::VectorXd CstrEnv::forecast() const {
  const std::size_t first = state_.window_start + static_cast<std::size_t>(state_.step);
  Eigen::VectorXd p(config_.forecast_length);
  for (int i = 0; i < config_.forecast_length; ++i) p[i] = prices_->prices[first + static_cast<std::size_t>(i)];
  return p;
}

Observation CstrEnv::observe() const { return {scale_state(state_.x), state_.storage, forecast()}; }

StepResult CstrEnv::step(const Action &u) {
  if (state_.done) throw ad::ContractViolation("CstrEnv::step called on a finished episode");
  StepResult out;
  out.applied = clip_action(u);
  out.price = current_price();
  state_.x = integrate_step(state_.x, out.applied, config_.plant, 1.0, config_.substeps);
  state_.storage = next_storage(state_.storage, out.applied.rho);
  ++state_.step;
  out.reward = compute_reward(out.applied, out.price, state_.x, state_.storage, config_.reward);
  out.violations = measure_violations(state_.x, state_.storage);
  out.terminated = config_.terminate_on_violation &&
                   outsized_violation(out.violations, config_.termination_limit);
  out.truncated = !out.terminated && state_.step >= config_.max_steps;
  state_.done = out.terminated || out.truncated;
  return out;
}

} // namespace pimbpo::cstr
