#include "pimbpo/diff/optim.hpp"

#include <cmath>
#include <vector>

namespace pimbpo::ad {

AdamState::AdamState(AdamConfig cfg, const ParamVector &layout)
    : config(cfg), first_moment(layout.zeros_like()), second_moment(layout.zeros_like()) {}

void adam_step(AdamState &state, ParamVector &params, const ParamVector &grads) {
  if (state.first_moment.block_count() == 0) {
    state.first_moment = params.zeros_like();
    state.second_moment = params.zeros_like();
  }
  if (!params.same_layout(grads) || !params.same_layout(state.first_moment))
    throw ContractViolation("adam_step: parameter/gradient/moment shapes differ");

  ++state.step;
  const AdamConfig &c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const double step_size = c.learning_rate / bc1;
  const double sqrt_bc2 = std::sqrt(bc2);

  auto &pb = params.blocks();
  auto &mb = state.first_moment.blocks();
  auto &vb = state.second_moment.blocks();
  const auto &gb = grads.blocks();
  for (std::size_t i = 0; i < pb.size(); ++i) {
    auto g = gb[i].value.array();
    mb[i].value.array() = c.beta1 * mb[i].value.array() + (1.0 - c.beta1) * g;
    vb[i].value.array() = c.beta2 * vb[i].value.array() + (1.0 - c.beta2) * g.square();
    pb[i].value.array() -=
        step_size * mb[i].value.array() / (vb[i].value.array().sqrt() / sqrt_bc2 + c.epsilon);
  }
}

double clip_grad_norm(ParamVector &grads, double max_norm) {
  const double n = grads.norm();
  if (n > max_norm && n > 0.0) grads.scale(max_norm / (n + 1e-6));
  return n;
}

void LbfgsState::reset_history() {
  s_history.clear();
  y_history.clear();
}

LbfgsStepResult lbfgs_step(LbfgsState &state, Eigen::VectorXd &params,
                           const LossEvaluator &evaluate) {
  LbfgsStepResult result;
  const LbfgsConfig &cfg = state.config;

  if (!state.has_cache || state.cached_x.size() != params.size() ||
      state.cached_x != params) {
    state.cached_grad.resize(params.size());
    state.cached_loss = evaluate(params, state.cached_grad);
    state.cached_x = params;
    state.has_cache = true;
    ++result.evaluations;
  }
  const double f0 = state.cached_loss;
  const Eigen::VectorXd g0 = state.cached_grad;
  result.loss = f0;

  if (!std::isfinite(f0) || !g0.allFinite()) {
    result.stalled = true;
    return result;
  }
  if (g0.lpNorm<Eigen::Infinity>() <= cfg.gradient_tolerance) {
    result.converged = true;
    return result;
  }

  // Two-loop recursion.
  const std::size_t m = state.s_history.size();
  Eigen::VectorXd q = g0;
  std::vector<double> alpha(m), rho(m);
  for (std::size_t k = m; k-- > 0;) {
    rho[k] = 1.0 / state.y_history[k].dot(state.s_history[k]);
    alpha[k] = rho[k] * state.s_history[k].dot(q);
    q -= alpha[k] * state.y_history[k];
  }
  double initial_step = 1.0;
  if (m > 0) {
    const auto &s = state.s_history.back();
    const auto &y = state.y_history.back();
    q *= s.dot(y) / y.dot(y);
  } else {
    initial_step = std::min(1.0, 1.0 / g0.lpNorm<1>());
  }
  for (std::size_t k = 0; k < m; ++k) {
    const double beta = rho[k] * state.y_history[k].dot(q);
    q += state.s_history[k] * (alpha[k] - beta);
  }
  Eigen::VectorXd direction = -q;
  double slope = g0.dot(direction);
  if (!(slope < 0.0)) {
    state.reset_history();
    direction = -g0;
    slope = -g0.squaredNorm();
    initial_step = std::min(1.0, 1.0 / g0.lpNorm<1>());
  }

  double t = initial_step;
  Eigen::VectorXd trial(params.size());
  Eigen::VectorXd g_trial(params.size());
  for (int trial_no = 0; trial_no < cfg.max_line_search; ++trial_no) {
    trial = params + t * direction;
    const double f = evaluate(trial, g_trial);
    ++result.evaluations;
    if (std::isfinite(f) && g_trial.allFinite() && f <= f0 + cfg.armijo_c1 * t * slope) {
      Eigen::VectorXd s = trial - params;
      Eigen::VectorXd y = g_trial - g0;
      const double sy = s.dot(y);
      if (sy > 1e-12 * s.norm() * y.norm() && sy > 0.0) {
        state.s_history.push_back(std::move(s));
        state.y_history.push_back(std::move(y));
        while (static_cast<int>(state.s_history.size()) > cfg.history) {
          state.s_history.pop_front();
          state.y_history.pop_front();
        }
      }
      params = trial;
      state.cached_x = trial;
      state.cached_loss = f;
      state.cached_grad = g_trial;
      result.loss = f;
      return result;
    }
    t *= cfg.backtrack;
  }
  result.stalled = true;
  return result;
}

} // namespace pimbpo::ad
