#pragma once

#include "pimbpo/ocp/policy.hpp"
#include "pimbpo/rl/critic.hpp"

#include <functional>
#include <memory>
#include <random>
#include <string>

namespace pimbpo::rl {

/// Means of a batch of observations, rows in scaled action units, plus a
/// vector-Jacobian product: given dL/dmeans (same shape) it returns dL/dparams.
struct MeanBatch {
  Matrix means;
  int solver_failures = 0;
  std::function<ParamVector(const Matrix &dmeans)> vjp;
};

/// Deterministic part of a Gaussian policy. The state-independent log-std
/// lives with the learner, not here.
class Policy {
public:
  virtual ~Policy() = default;

  [[nodiscard]] virtual std::string kind() const = 0;
  [[nodiscard]] virtual ParamVector &params() = 0;
  [[nodiscard]] virtual const ParamVector &params() const = 0;
  /// Mean action in scaled units, inside [-1, 1] for the eNMPC.
  [[nodiscard]] virtual Eigen::Vector2d mean(const cstr::Observation &obs) const = 0;
  [[nodiscard]] virtual MeanBatch means(const std::vector<cstr::Observation> &obs, bool with_gradient) const = 0;
  [[nodiscard]] virtual std::unique_ptr<Policy> clone() const = 0;
};

/// Koopman eNMPC whose only trainable parameters are the six bound offsets,
/// stored as a 1 x 6 block "theta_B".
class MpcBoundsPolicy final : public Policy {
public:
  explicit MpcBoundsPolicy(ocp::MpcPolicy mpc, const ocp::BoundParams &theta = {});

  [[nodiscard]] std::string kind() const override { return "koopman_enmpc"; }
  [[nodiscard]] ParamVector &params() override { return params_; }
  [[nodiscard]] const ParamVector &params() const override { return params_; }
  [[nodiscard]] ocp::BoundParams theta() const;
  void set_theta(const ocp::BoundParams &theta);
  [[nodiscard]] const ocp::MpcPolicy &mpc() const { return mpc_; }

  [[nodiscard]] Eigen::Vector2d mean(const cstr::Observation &obs) const override;
  [[nodiscard]] MeanBatch means(const std::vector<cstr::Observation> &obs, bool with_gradient) const override;
  [[nodiscard]] std::unique_ptr<Policy> clone() const override;

private:
  ocp::MpcPolicy mpc_;
  ParamVector params_;
};

/// Branched network with a two-unit linear head.
class MlpPolicy final : public Policy {
public:
  explicit MlpPolicy(std::uint64_t seed);
  MlpPolicy(ParamVector params);

  [[nodiscard]] std::string kind() const override { return "mlp"; }
  [[nodiscard]] ParamVector &params() override { return params_; }
  [[nodiscard]] const ParamVector &params() const override { return params_; }
  [[nodiscard]] const BranchedNet &net() const { return net_; }

  [[nodiscard]] Eigen::Vector2d mean(const cstr::Observation &obs) const override;
  [[nodiscard]] MeanBatch means(const std::vector<cstr::Observation> &obs, bool with_gradient) const override;
  [[nodiscard]] std::unique_ptr<Policy> clone() const override;

private:
  BranchedNet net_{"pi.", 2};
  ParamVector params_;
};

/// One draw from N(mean, sigma^2). `log_prob` is the joint density of the
/// unclipped sample; `clipped` is what the plant receives.
struct ActionSample {
  Eigen::Vector2d mean;
  Eigen::Vector2d raw;
  Eigen::Vector2d clipped;
  double log_prob = 0.0;

  [[nodiscard]] cstr::Action action() const { return cstr::unscale_action(clipped); }
};

/// sigma = 0 returns the mean and a zero log-probability.
[[nodiscard]] ActionSample sample_action(const Eigen::Vector2d &mean, const Eigen::Vector2d &sigma,
                                         std::mt19937_64 &rng);

[[nodiscard]] double joint_log_prob(const Eigen::Vector2d &a, const Eigen::Vector2d &mean, const Eigen::Vector2d &sigma);

} // namespace pimbpo::rl
