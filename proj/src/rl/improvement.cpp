#include "pimbpo/rl/improvement.hpp"

#include <limits>
#include <stdexcept>

namespace pimbpo::rl {

ImprovementTracker::ImprovementTracker(std::size_t environments, ImprovementConfig config)
    : config_(config), best_(environments, -std::numeric_limits<double>::infinity()),
      best_iteration_(environments, -1) {
  if (environments == 0) throw std::invalid_argument("improvement check needs at least one environment");
}

ImprovementCheck ImprovementTracker::record(int iteration, const std::vector<double> &averages) {
  if (averages.size() != best_.size()) throw std::invalid_argument("one average per validation environment");
  ImprovementCheck out;
  out.iteration = iteration;
  out.averages = averages;
  std::size_t improving = 0;
  for (std::size_t i = 0; i < best_.size(); ++i) {
    if (averages[i] > best_[i]) {
      best_[i] = averages[i];
      best_iteration_[i] = iteration;
    }
    const bool up = best_iteration_[i] >= 0 && iteration - best_iteration_[i] < config_.window;
    out.improving.push_back(up);
    improving += up ? 1 : 0;
  }
  out.ratio = static_cast<double>(improving) / static_cast<double>(best_.size());
  out.terminate = out.ratio < config_.threshold;
  return out;
}

double average_episode_reward(const Policy &policy, SurrogateEnv &env, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("need at least one episode");
  env.reseed(seed);
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    cstr::Observation obs = env.reset();
    while (!env.done()) {
      const SurrogateStep s = env.step(policy.mean(obs));
      total += s.reward.total;
      obs = s.observation;
    }
  }
  return total / episodes;
}

} // namespace pimbpo::rl
