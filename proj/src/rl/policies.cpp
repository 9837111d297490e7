#include "pimbpo/rl/policies.hpp"

#include <memory>
#include <stdexcept>

namespace pimbpo::rl {

namespace {

ParamVector theta_block(const ocp::BoundParams &theta) {
  ParamVector p;
  p.add("theta_B", theta.to_vector().transpose());
  return p;
}

} // namespace

MpcBoundsPolicy::MpcBoundsPolicy(ocp::MpcPolicy mpc, const ocp::BoundParams &theta)
    : mpc_(std::move(mpc)), params_(theta_block(theta)) {}

ocp::BoundParams MpcBoundsPolicy::theta() const {
  return ocp::BoundParams::from_vector(params_["theta_B"].row(0).transpose());
}

void MpcBoundsPolicy::set_theta(const ocp::BoundParams &theta) { params_["theta_B"] = theta.to_vector().transpose(); }

Eigen::Vector2d MpcBoundsPolicy::mean(const cstr::Observation &obs) const {
  return mpc_.mean(obs, theta(), false).u;
}

MeanBatch MpcBoundsPolicy::means(const std::vector<cstr::Observation> &obs, bool with_gradient) const {
  const ocp::BoundParams th = theta();
  const auto n = static_cast<Eigen::Index>(obs.size());
  MeanBatch out;
  out.means.resize(n, 2);
  auto jac = std::make_shared<std::vector<Eigen::Matrix<double, 2, 6>>>();
  jac->reserve(obs.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const ocp::MpcPolicy::Mean m = mpc_.mean(obs[static_cast<std::size_t>(i)], th, with_gradient);
    out.means.row(i) = m.u.transpose();
    out.solver_failures += m.solver_failed ? 1 : 0;
    jac->push_back(m.du_dtheta);
  }
  if (with_gradient) {
    ParamVector layout = params_.zeros_like();
    out.vjp = [jac, layout](const Matrix &dmeans) {
      ParamVector g = layout;
      Eigen::Matrix<double, 6, 1> acc = Eigen::Matrix<double, 6, 1>::Zero();
      for (std::size_t i = 0; i < jac->size(); ++i)
        acc += (*jac)[i].transpose() * dmeans.row(static_cast<Eigen::Index>(i)).transpose();
      g["theta_B"] = acc.transpose();
      return g;
    };
  }
  return out;
}

std::unique_ptr<Policy> MpcBoundsPolicy::clone() const { return std::make_unique<MpcBoundsPolicy>(*this); }

MlpPolicy::MlpPolicy(std::uint64_t seed) : params_(net_.init(seed)) {}

MlpPolicy::MlpPolicy(ParamVector params) : params_(std::move(params)) {
  if (!params_.same_layout(net_.init(0))) throw std::invalid_argument("MlpPolicy: parameter layout mismatch");
}

Eigen::Vector2d MlpPolicy::mean(const cstr::Observation &obs) const {
  return net_.evaluate(params_, features(obs)).row(0).transpose();
}

MeanBatch MlpPolicy::means(const std::vector<cstr::Observation> &obs, bool with_gradient) const {
  MeanBatch out;
  if (!with_gradient) {
    out.means = net_.evaluate(params_, features(obs));
    return out;
  }
  auto tape = std::make_shared<ad::Tape>();
  auto bound = std::make_shared<ad::TapeParams>(*tape, params_);
  const ad::Var m = net_.forward(*bound, tape->constant(features(obs)));
  out.means = m.value();
  out.vjp = [tape, bound, m](const Matrix &dmeans) {
    const ad::Var loss = ad::sum(ad::mul(m, tape->constant(dmeans)));
    return bound->gradient(tape->backward(loss));
  };
  return out;
}

std::unique_ptr<Policy> MlpPolicy::clone() const { return std::make_unique<MlpPolicy>(*this); }

double joint_log_prob(const Eigen::Vector2d &a, const Eigen::Vector2d &mean, const Eigen::Vector2d &sigma) {
  return ocp::gaussian_log_prob(a, mean, sigma).sum();
}

ActionSample sample_action(const Eigen::Vector2d &mean, const Eigen::Vector2d &sigma, std::mt19937_64 &rng) {
  if ((sigma.array() < 0).any() || !sigma.allFinite()) throw std::invalid_argument("sigma must be finite and >= 0");
  ActionSample s;
  s.mean = mean;
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 2; ++i) s.raw[i] = sigma[i] > 0 ? mean[i] + sigma[i] * n(rng) : mean[i];
  s.clipped = s.raw.cwiseMax(-1.0).cwiseMin(1.0);
  s.log_prob = (sigma.array() > 0).all() ? joint_log_prob(s.raw, mean, sigma) : 0.0;
  return s;
}

} // namespace pimbpo::rl
