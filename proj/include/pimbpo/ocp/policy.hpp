#pragma once

#include "pimbpo/cstr/env.hpp"
#include "pimbpo/ocp/ocp.hpp"

#include <random>

namespace pimbpo::ocp {

struct PolicyOutput {
  Eigen::Vector2d mean;       // u*, scaled
  Eigen::Vector2d raw_sample; // before clipping
  Eigen::Vector2d sample;     // clipped to [-1, 1]
  Eigen::Vector2d log_prob;   // per dimension, at raw_sample
  Eigen::Vector2d sigma;
  bool solver_failed = false;
  [[nodiscard]] cstr::Action action() const { return cstr::unscale_action(sample); }
};

/// Per-dimension log density of N(mean, sigma^2) at `a`.
[[nodiscard]] Eigen::Vector2d gaussian_log_prob(const Eigen::Vector2d &a, const Eigen::Vector2d &mean,
                                                const Eigen::Vector2d &sigma);

/// Koopman eNMPC: encodes the scaled state, solves the bound-offset OCP and
/// returns the first control. theta_K is frozen inside the policy.
class MpcPolicy {
public:
  MpcPolicy(koopman::KoopmanModel model, ad::ParamVector theta_k, OcpConfig config = {});

  [[nodiscard]] const ad::ParamVector &theta_k() const { return theta_k_; }
  [[nodiscard]] const OcpProblem &problem() const { return problem_; }

  [[nodiscard]] OcpInstance instance(const cstr::Observation &obs, const BoundParams &theta) const;
  [[nodiscard]] OcpSolution plan(const cstr::Observation &obs, const BoundParams &theta) const;

  struct Mean {
    Eigen::Vector2d u;
    Eigen::Matrix<double, 2, 6> du_dtheta = Eigen::Matrix<double, 2, 6>::Zero();
    bool solver_failed = false;
  };
  /// Deterministic action and its theta Jacobian; steady-state controls with
  /// a zero Jacobian when the solver fails.
  [[nodiscard]] Mean mean(const cstr::Observation &obs, const BoundParams &theta, bool with_gradient) const;

  /// Samples u ~ N(u*, sigma^2) and clips it; sigma = 0 returns u* exactly.
  [[nodiscard]] PolicyOutput act(const cstr::Observation &obs, const BoundParams &theta,
                                 const Eigen::Vector2d &sigma, std::mt19937_64 &rng) const;
  [[nodiscard]] PolicyOutput act(const cstr::Observation &obs, const BoundParams &theta,
                                 const Eigen::Vector2d &sigma, std::uint64_t seed) const;

private:
  koopman::KoopmanModel model_;
  ad::ParamVector theta_k_;
  OcpProblem problem_;
};

} // namespace pimbpo::ocp
