#pragma once

#include "pimbpo/diff/optim.hpp"
#include "pimbpo/rl/improvement.hpp"

#include <json.hpp>

#include <cmath>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <random>

namespace pimbpo::rl {

struct PpoConfig {
  int steps_per_iteration = 2048;
  int minibatch = 256;
  int epochs = 10;
  double learning_rate = 1e-3;
  double adam_epsilon = 1e-5;
  double max_grad_norm = 0.5;
  double clip_ratio = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double value_coef = 0.5;
  double initial_log_std = std::log(0.05);
  bool normalize_advantages = true;
};

[[nodiscard]] nlohmann::json to_json(const PpoConfig &c);
[[nodiscard]] PpoConfig ppo_config_from_json(const nlohmann::json &j);

struct RolloutStep {
  cstr::Observation obs;
  Eigen::Vector2d action; // unclipped sample
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  /// V of the state reached; zero when the episode terminated there.
  double next_value = 0.0;
  bool terminated = false;
  bool truncated = false;
};

struct RolloutBuffer {
  std::vector<RolloutStep> steps;
  int episodes_finished = 0;
  double finished_return_sum = 0.0;
  int solver_failures = 0;
  int diverged_steps = 0;

  [[nodiscard]] std::size_t size() const { return steps.size(); }
};

struct GaeResult {
  Eigen::VectorXd advantages; // normalized when requested
  Eigen::VectorXd returns;    // raw advantages + values
};

/// GAE over the buffer. A trajectory is cut after a terminated or truncated
/// step and at the end of the buffer; the cut step bootstraps from its
/// next_value.
[[nodiscard]] GaeResult compute_gae(const RolloutBuffer &buffer, double gamma, double lambda, bool normalize);

struct ClippedSurrogate {
  double value = 0.0;   // min(r A, clip(r) A)
  double d_ratio = 0.0; // derivative with respect to r
};
[[nodiscard]] ClippedSurrogate clipped_surrogate(double ratio, double advantage, double clip);

/// Policy, state-independent log-std and critic, each with its own Adam
/// moments. Gradient clipping is applied to their joint norm.
class PpoAgent {
public:
  PpoAgent(std::unique_ptr<Policy> policy, const PpoConfig &config, std::uint64_t critic_seed);
  PpoAgent(const PpoAgent &other);
  PpoAgent &operator=(const PpoAgent &other);
  PpoAgent(PpoAgent &&) = default;
  PpoAgent &operator=(PpoAgent &&) = default;

  [[nodiscard]] Policy &policy() { return *policy_; }
  [[nodiscard]] const Policy &policy() const { return *policy_; }
  /// Swaps in a policy with the same parameter layout (for instance after a
  /// model refit); optimizer moments are kept.
  void replace_policy(std::unique_ptr<Policy> policy);

  [[nodiscard]] Eigen::Vector2d sigma() const;
  [[nodiscard]] ParamVector &log_std() { return log_std_; }
  [[nodiscard]] const ParamVector &log_std() const { return log_std_; }
  [[nodiscard]] const BranchedNet &critic() const { return critic_; }
  [[nodiscard]] ParamVector &critic_params() { return critic_params_; }
  [[nodiscard]] const ParamVector &critic_params() const { return critic_params_; }
  [[nodiscard]] Eigen::VectorXd values(const std::vector<cstr::Observation> &obs) const;

  ad::AdamState policy_adam, log_std_adam, critic_adam;

private:
  std::unique_ptr<Policy> policy_;
  ParamVector log_std_;
  BranchedNet critic_;
  ParamVector critic_params_;
};

/// Collects `steps` transitions, resetting the environment whenever an
/// episode ends. Episodes may continue into the next call.
[[nodiscard]] RolloutBuffer collect_rollout(const PpoAgent &agent, SurrogateEnv &env, int steps,
                                            std::mt19937_64 &rng);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0; // before clipping
  // losses, kl, clip fraction and grad norm are means over applied minibatches
  int minibatches = 0;
  int skipped_minibatches = 0; // non-finite loss
  int solver_failures = 0;
};

/// Losses and raw (unclipped) gradients of one minibatch. The policy loss is
/// the negated clipped surrogate; the critic gradient includes value_coef.
struct MinibatchGradients {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  int solver_failures = 0;
  bool finite = true;
  ParamVector policy, log_std, critic;
};
[[nodiscard]] MinibatchGradients ppo_minibatch_gradients(const PpoAgent &agent, const RolloutBuffer &buffer,
                                                         const GaeResult &gae, const std::vector<Eigen::Index> &rows,
                                                         const PpoConfig &config);

/// Clipped-surrogate policy loss plus value MSE, several epochs of shuffled
/// minibatches. Minibatches with a non-finite loss are skipped and counted.
UpdateStats ppo_update(PpoAgent &agent, const RolloutBuffer &buffer, const GaeResult &gae, const PpoConfig &config,
                       std::mt19937_64 &rng);

/// Scales all groups together so that their joint L2 norm is at most
/// max_norm. Returns the norm before clipping.
double clip_joint_grad_norm(std::vector<ParamVector *> groups, double max_norm);

struct PpoIterationStats {
  int iteration = 0;
  int steps = 0;
  int episodes = 0;
  double mean_step_reward = 0.0;
  double mean_episode_return = std::numeric_limits<double>::quiet_NaN();
  UpdateStats update;
  Eigen::Vector2d sigma = Eigen::Vector2d::Zero();
  std::optional<ImprovementCheck> check;
};

void write_metrics_csv_header(std::ostream &os);
void write_metrics_csv_row(std::ostream &os, const PpoIterationStats &s);
[[nodiscard]] nlohmann::json to_json(const PpoIterationStats &s);

struct PolicyOptimizationConfig {
  PpoConfig ppo;
  ImprovementConfig improvement;
  /// Hard cap on PPO iterations per call; the ratio rule usually stops first.
  int max_iterations = 1000;
};

struct PolicyOptimizationResult {
  int iterations = 0;
  bool stopped_by_ratio = false;
  std::vector<PpoIterationStats> history;
};

/// PPO on the surrogate until the improvement ratio on the validation
/// environments (one per ensemble member) drops below the threshold.
PolicyOptimizationResult optimize_policy(PpoAgent &agent, SurrogateEnv &env, std::vector<SurrogateEnv> &validation,
                                         const PolicyOptimizationConfig &config, std::mt19937_64 &rng,
                                         const std::function<void(const PpoIterationStats &)> &sink = {});

} // namespace pimbpo::rl
