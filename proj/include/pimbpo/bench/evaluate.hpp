#pragma once

#include "pimbpo/cstr/env.hpp"
#include "pimbpo/rl/policies.hpp"

#include <json.hpp>

#include <vector>

namespace pimbpo::bench {

struct EvalConfig {
  int episodes = 10;
  int steps = 168;
  /// Storage level at the start of every test week.
  double initial_storage = 1.5;
};

[[nodiscard]] nlohmann::json to_json(const EvalConfig &c);
[[nodiscard]] EvalConfig eval_config_from_json(const nlohmann::json &j);

struct EpisodeMetrics {
  std::size_t window_start = 0;
  int steps = 0;
  double total_reward = 0.0;
  int violations = 0; // steps ending with any state or storage bound violated
  double cost = 0.0;         // sum of price x coolant flow
  double nominal_cost = 0.0; // same prices at steady-state flow
  double relative_cost = 0.0;
};

struct Summary {
  double mean = 0.0;
  double std = 0.0; // population standard deviation
};

struct EvalMetrics {
  std::vector<EpisodeMetrics> episodes;
  Summary reward, violations, relative_cost;
};

/// Test windows: the first `count` non-overlapping windows of steps + forecast
/// hours in the evaluation partition.
[[nodiscard]] std::vector<std::size_t> test_windows(const cstr::PriceSeries &prices, const EvalConfig &config);

/// Steady-state production cost over `steps` hours starting at `window_start`.
[[nodiscard]] double nominal_cost(const cstr::PriceSeries &prices, std::size_t window_start, int steps);

/// Runs the deterministic controller (no exploration noise) for full test
/// weeks on held-out prices. Episodes are never cut short by violations.
[[nodiscard]] EvalMetrics evaluate(const rl::Policy &controller, const cstr::PriceSeries &prices,
                                   const EvalConfig &config = {});

/// Pools the episodes of several runs (one per seed) into one summary.
[[nodiscard]] EvalMetrics pool(const std::vector<EvalMetrics> &runs);

[[nodiscard]] nlohmann::json to_json(const EvalMetrics &m);

} // namespace pimbpo::bench
