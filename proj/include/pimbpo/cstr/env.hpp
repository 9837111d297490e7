#pragma once

#include "pimbpo/cstr/plant.hpp"
#include "pimbpo/cstr/prices.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <optional>
#include <random>

namespace pimbpo::cstr {

struct RewardConfig {
  double cost_weight = 5e-6;
  double violation_weight = 1.0; // on squared violations: scaled c, T; natural-unit storage
  double violation_flag_penalty = 0.1;
  double survival_bonus = 1.0;
};

/// Distance beyond the violated bound, zero when inside. c and T are measured
/// in scaled units, storage in hours.
struct Violations {
  double c = 0.0;
  double T = 0.0;
  double storage = 0.0;

  [[nodiscard]] bool any() const { return c > 0.0 || T > 0.0 || storage > 0.0; }
};

[[nodiscard]] Violations measure_violations(const SysState &x, double storage);

struct RewardBreakdown {
  double cost = 0.0;
  double con_rel = 0.0;
  double con_bool = 0.0;
  double total = 0.0;
};

/// Reward for arriving in (x, storage) after applying `prev_action` during an
/// hour priced at `prev_price`.
[[nodiscard]] RewardBreakdown compute_reward(const Action &prev_action, double prev_price,
                                             const SysState &x, double storage,
                                             const RewardConfig &config = {});

/// True when c or T lies further beyond a bound than the width of its scaled
/// feasible interval.
[[nodiscard]] bool outsized_violation(const Violations &v, double limit = 2.0);

/// One hour of storage bookkeeping: demand is fixed at steady-state production.
[[nodiscard]] constexpr double next_storage(double storage, double rho, double dt = 1.0) {
  return storage + (rho - kProduction.ss) * dt;
}

struct EnvConfig {
  CstrParams plant;
  RewardConfig reward;
  int max_steps = 167;
  int forecast_length = 10;
  int substeps = 20;
  double termination_limit = 2.0;
  bool terminate_on_violation = true;
  Partition partition = Partition::Train;
  double storage_reset_low = 1.0;
  double storage_reset_high = 2.0;

  /// Prices an episode touches: one per step plus a forecast at the final state.
  [[nodiscard]] std::size_t window_length() const {
    return static_cast<std::size_t>(max_steps + forecast_length);
  }
};

/// What a controller sees: scaled system state, storage level, and the price
/// forecast beginning with the current hour.
struct Observation {
  Eigen::Vector2d x_scaled;
  double storage = 0.0;
  Eigen::VectorXd prices;
};

struct EnvState {
  SysState x;
  double storage = 0.0;
  int step = 0;
  std::size_t window_start = 0; // absolute index of the episode's first price
  bool done = true;
};

struct StepResult {
  Action applied;
  double price = 0.0; // price of the hour just simulated
  RewardBreakdown reward;
  Violations violations;
  bool terminated = false;
  bool truncated = false;
};

/// The real plant with product storage and an electricity price window.
/// Owns its RNG; one instance per rollout worker.
class CstrEnv {
public:
  CstrEnv(EnvConfig config, std::shared_ptr<const PriceSeries> prices, std::uint64_t seed);

  /// Steady-state start, storage ~ U[low, high], random window in the partition.
  const EnvState &reset();
  /// Same as reset() but with a fixed price window; storage is still sampled
  /// unless `storage` is given.
  const EnvState &reset_at(std::size_t window_start, std::optional<double> storage = std::nullopt);

  /// Clips `u`, integrates one hour, advances storage and prices.
  StepResult step(const Action &u);

  [[nodiscard]] const EnvState &state() const { return state_; }
  [[nodiscard]] const EnvConfig &config() const { return config_; }
  [[nodiscard]] double current_price() const;
  [[nodiscard]] Eigen::VectorXd forecast() const;
  [[nodiscard]] Observation observe() const;
  [[nodiscard]] std::mt19937_64 &rng() { return rng_; }
  [[nodiscard]] const std::mt19937_64 &rng() const { return rng_; }
  [[nodiscard]] const PriceSeries &prices() const { return *prices_; }

private:
  EnvConfig config_;
  std::shared_ptr<const PriceSeries> prices_;
  std::mt19937_64 rng_;
  EnvState state_;
};

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace pimbpo::cstr
