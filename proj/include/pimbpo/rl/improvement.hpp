#pragma once

#include "pimbpo/rl/policies.hpp"
#include "pimbpo/rl/surrogate.hpp"

#include <vector>

namespace pimbpo::rl {

struct ImprovementConfig {
  int check_every = 5;   // PPO iterations between checks
  int episodes = 5;      // per validation environment
  int window = 25;       // PPO iterations within which a new best must occur
  double threshold = 0.7;
  std::uint64_t seed = 0x5eed'c4ec'0000'0001ull; // fixed so checks stay comparable
};

struct ImprovementCheck {
  int iteration = 0;
  std::vector<double> averages;
  std::vector<bool> improving;
  double ratio = 1.0;
  bool terminate = false;
};

/// Running best average reward per validation environment. An environment
/// counts as improving when its best was renewed within the last `window`
/// PPO iterations; optimization stops once the improving share falls
/// strictly below the threshold. A fresh tracker has no baseline, so every
/// environment sets its first best on the first check.
class ImprovementTracker {
public:
  ImprovementTracker(std::size_t environments, ImprovementConfig config = {});

  ImprovementCheck record(int iteration, const std::vector<double> &averages);

  [[nodiscard]] const std::vector<double> &best() const { return best_; }
  [[nodiscard]] const std::vector<int> &best_iteration() const { return best_iteration_; }

private:
  ImprovementConfig config_;
  std::vector<double> best_;
  std::vector<int> best_iteration_;
};

/// Mean total reward per episode of the deterministic policy. The
/// environment is reseeded first, so repeated calls see the same start
/// states and price windows.
[[nodiscard]] double average_episode_reward(const Policy &policy, SurrogateEnv &env, int episodes,
                                            std::uint64_t seed);

} // namespace pimbpo::rl
