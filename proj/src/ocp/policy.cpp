#include "pimbpo/ocp/policy.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pimbpo::ocp {

Eigen::Vector2d gaussian_log_prob(const Eigen::Vector2d &a, const Eigen::Vector2d &mean, const Eigen::Vector2d &sigma) {
  Eigen::Vector2d out;
  for (int i = 0; i < 2; ++i) {
    const double z = (a[i] - mean[i]) / sigma[i];
    out[i] = -0.5 * z * z - std::log(sigma[i]) - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  return out;
}

MpcPolicy::MpcPolicy(koopman::KoopmanModel model, ad::ParamVector theta_k, OcpConfig config)
    : model_(std::move(model)), theta_k_(std::move(theta_k)),
      problem_(KoopmanMatrices::from_params(theta_k_), config) {}

OcpInstance MpcPolicy::instance(const cstr::Observation &obs, const BoundParams &theta) const {
  const int points = problem_.config().horizon + 1;
  if (obs.prices.size() < points) throw std::invalid_argument("observation carries too few prices");
  OcpInstance inst;
  inst.z0 = model_.encode(theta_k_, obs.x_scaled.transpose()).row(0).transpose();
  inst.l0 = obs.storage;
  inst.prices = obs.prices.head(points);
  inst.theta = theta;
  return inst;
}

OcpSolution MpcPolicy::plan(const cstr::Observation &obs, const BoundParams &theta) const {
  return problem_.solve(instance(obs, theta));
}

MpcPolicy::Mean MpcPolicy::mean(const cstr::Observation &obs, const BoundParams &theta, bool with_gradient) const {
  Mean m;
  const OcpInstance inst = instance(obs, theta);
  const OcpSolution sol = problem_.solve(inst);
  if (!sol.ok()) {
    m.u = cstr::scale_action(cstr::kSteadyAction);
    m.solver_failed = true;
    return m;
  }
  m.u = sol.first_control().cwiseMax(-1.0).cwiseMin(1.0);
  if (with_gradient) m.du_dtheta = problem_.grad_theta_B(inst, sol).du0;
  return m;
}

PolicyOutput MpcPolicy::act(const cstr::Observation &obs, const BoundParams &theta, const Eigen::Vector2d &sigma,
                            std::mt19937_64 &rng) const {
  if ((sigma.array() < 0).any() || !sigma.allFinite()) throw std::invalid_argument("sigma must be finite and >= 0");
  const Mean m = mean(obs, theta, false);
  PolicyOutput out;
  out.mean = m.u;
  out.sigma = sigma;
  out.solver_failed = m.solver_failed;
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 2; ++i) out.raw_sample[i] = sigma[i] > 0 ? m.u[i] + sigma[i] * n(rng) : m.u[i];
  out.sample = out.raw_sample.cwiseMax(-1.0).cwiseMin(1.0);
  out.log_prob = (sigma.array() > 0).all() ? gaussian_log_prob(out.raw_sample, m.u, sigma) : Eigen::Vector2d::Zero();
  return out;
}

PolicyOutput MpcPolicy::act(const cstr::Observation &obs, const BoundParams &theta, const Eigen::Vector2d &sigma,
                            std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  return act(obs, theta, sigma, rng);
}

} // namespace pimbpo::ocp
