#include "pimbpo/rl/surrogate.hpp"

#include "pimbpo/diff/errors.hpp"

#include <cmath>

namespace pimbpo::rl {

SurrogateEnv::SurrogateEnv(std::shared_ptr<const pinn::Ensemble> ensemble, std::vector<cstr::SysState> start_pool,
                           std::shared_ptr<const cstr::PriceSeries> prices, SurrogateConfig config,
                           std::uint64_t seed, std::optional<std::size_t> member)
    : ensemble_(std::move(ensemble)), pool_(std::move(start_pool)), prices_(std::move(prices)),
      config_(config), rng_(seed), member_(member) {
  if (!ensemble_ || ensemble_->size() == 0) throw cstr::ConfigError("surrogate needs a non-empty ensemble");
  if (pool_.empty()) throw cstr::ConfigError("surrogate start-state pool is empty");
  if (!prices_) throw cstr::ConfigError("surrogate needs a price series");
  if (member_ && *member_ >= ensemble_->size()) throw cstr::ConfigError("pinned member out of range");
  if (config_.max_steps < 1) throw cstr::ConfigError("surrogate max_steps must be positive");
  const auto needed = static_cast<std::size_t>(config_.max_steps + config_.forecast_length);
  if (prices_->size(config_.partition) < needed) throw cstr::ConfigError("price partition shorter than one episode");
}

cstr::Observation SurrogateEnv::observe() const {
  const auto start = static_cast<Eigen::Index>(window_) + step_;
  Eigen::VectorXd forecast(config_.forecast_length);
  for (int i = 0; i < config_.forecast_length; ++i)
    forecast[i] = prices_->prices[static_cast<std::size_t>(start + i)];
  return {cstr::scale_state(x_), storage_, forecast};
}

cstr::Observation SurrogateEnv::reset() {
  std::uniform_int_distribution<std::size_t> pick(0, pool_.size() - 1);
  x_ = pool_[pick(rng_)];
  storage_ = std::uniform_real_distribution<double>(config_.storage_reset_low, config_.storage_reset_high)(rng_);
  const std::size_t first = prices_->begin(config_.partition);
  const std::size_t last =
      prices_->end(config_.partition) - static_cast<std::size_t>(config_.max_steps + config_.forecast_length);
  window_ = std::uniform_int_distribution<std::size_t>(first, last)(rng_);
  step_ = 0;
  done_ = false;
  return observe();
}

SurrogateStep SurrogateEnv::step(const Eigen::Vector2d &u_scaled) {
  if (done_) throw ad::ContractViolation("SurrogateEnv::step called on a finished episode");
  SurrogateStep out;
  out.member = member_ ? *member_ : std::uniform_int_distribution<std::size_t>(0, ensemble_->size() - 1)(rng_);
  const cstr::Action u = cstr::clip_action(cstr::unscale_action(u_scaled));
  const double price = prices_->prices[window_ + static_cast<std::size_t>(step_)];
  cstr::SysState next = ensemble_->predict_step(out.member, x_, u);
  if (!std::isfinite(next.c) || !std::isfinite(next.T)) {
    // Keep the last finite state so the reward stays defined.
    next = x_;
    out.diverged = true;
  }
  x_ = next;
  storage_ = cstr::next_storage(storage_, u.rho);
  ++step_;
  out.reward = cstr::compute_reward(u, price, x_, storage_, config_.reward);
  out.violations = cstr::measure_violations(x_, storage_);
  out.terminated = out.diverged || cstr::outsized_violation(out.violations, config_.termination_limit);
  out.truncated = !out.terminated && step_ >= config_.max_steps;
  done_ = out.terminated || out.truncated;
  out.observation = observe();
  return out;
}

} // namespace pimbpo::rl
