#pragma once

#include "pimbpo/cstr/env.hpp"
#include "pimbpo/pinn/ensemble.hpp"

#include <memory>
#include <optional>
#include <random>
#include <vector>

namespace pimbpo::rl {

struct SurrogateConfig {
  int max_steps = 8;
  int forecast_length = 10;
  double storage_reset_low = 1.0;
  double storage_reset_high = 2.0;
  double termination_limit = 2.0;
  cstr::Partition partition = cstr::Partition::Train;
  cstr::RewardConfig reward;
};

struct SurrogateStep {
  cstr::Observation observation;
  cstr::RewardBreakdown reward;
  cstr::Violations violations;
  std::size_t member = 0;
  bool terminated = false;
  bool truncated = false;
  /// The member returned a non-finite state; the episode was terminated in
  /// place.
  bool diverged = false;
};

/// Short-horizon simulator built on a dynamics ensemble and the known reward.
/// Each step draws one member uniformly at random unless the environment is
/// pinned to a single member.
class SurrogateEnv {
public:
  SurrogateEnv(std::shared_ptr<const pinn::Ensemble> ensemble, std::vector<cstr::SysState> start_pool,
               std::shared_ptr<const cstr::PriceSeries> prices, SurrogateConfig config, std::uint64_t seed,
               std::optional<std::size_t> member = std::nullopt);

  /// State drawn uniformly from the pool, storage ~ U[low, high], fresh
  /// price window from the configured partition.
  cstr::Observation reset();
  /// Takes a scaled action; it is clipped to the box before use.
  SurrogateStep step(const Eigen::Vector2d &u_scaled);

  void reseed(std::uint64_t seed) { rng_.seed(seed); }
  [[nodiscard]] bool done() const { return done_; }
  [[nodiscard]] int steps() const { return step_; }
  [[nodiscard]] const cstr::SysState &state() const { return x_; }
  [[nodiscard]] double storage() const { return storage_; }
  [[nodiscard]] cstr::Observation observe() const;
  [[nodiscard]] const SurrogateConfig &config() const { return config_; }
  [[nodiscard]] std::size_t members() const { return ensemble_->size(); }
  [[nodiscard]] std::optional<std::size_t> pinned_member() const { return member_; }

private:
  std::shared_ptr<const pinn::Ensemble> ensemble_;
  std::vector<cstr::SysState> pool_;
  std::shared_ptr<const cstr::PriceSeries> prices_;
  SurrogateConfig config_;
  std::mt19937_64 rng_;
  std::optional<std::size_t> member_;

  cstr::SysState x_;
  double storage_ = 0.0;
  std::size_t window_ = 0;
  int step_ = 0;
  bool done_ = true;
};

} // namespace pimbpo::rl
