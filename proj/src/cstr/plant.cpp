#include "pimbpo/cstr/plant.hpp"

#include <cmath>
#include <string>

namespace pimbpo::cstr {

Eigen::Vector2d scale_state(const SysState &x) {
  return {kConcentration.scale(x.c), kTemperature.scale(x.T)};
}

SysState unscale_state(const Eigen::Vector2d &s) {
  return {kConcentration.unscale(s[0]), kTemperature.unscale(s[1])};
}

Eigen::Vector2d scale_action(const Action &u) { return {kProduction.scale(u.rho), kCoolant.scale(u.F)}; }

Action unscale_action(const Eigen::Vector2d &s) {
  return {kProduction.unscale(s[0]), kCoolant.unscale(s[1])};
}

Action clip_action(const Action &u) { return {kProduction.clip(u.rho), kCoolant.clip(u.F)}; }

double reaction_rate(const SysState &x, const CstrParams &p) {
  if (!(x.T > 0.0)) throw DomainError("reactor temperature must be positive, got " + std::to_string(x.T));
  return x.c * p.reaction_constant * std::exp(-p.activation_energy / x.T);
}

Eigen::Vector2d derivatives(const SysState &x, const Action &u, const CstrParams &p) {
  const double r = reaction_rate(x, p);
  const double dilution = u.rho / p.volume;
  return {(1.0 - x.c) * dilution - r,
          (p.feed_temperature - x.T) * dilution + r - u.F * p.heat_transfer * (x.T - p.coolant_temperature)};
}

SysState integrate_step(const SysState &x0, const Action &u, const CstrParams &p, double dt,
                        int substeps) {
  if (substeps < 1) throw DomainError("substeps must be positive");
  const double h = dt / substeps;
  Eigen::Vector2d y(x0.c, x0.T);
  auto f = [&](const Eigen::Vector2d &v) { return derivatives({v[0], v[1]}, u, p); };
  for (int i = 0; i < substeps; ++i) {
    const Eigen::Vector2d k1 = f(y);
    const Eigen::Vector2d k2 = f(y + 0.5 * h * k1);
    const Eigen::Vector2d k3 = f(y + 0.5 * h * k2);
    const Eigen::Vector2d k4 = f(y + h * k3);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  if (!y.allFinite()) throw IntegrationError("plant integration produced a non-finite state");
  return {y[0], y[1]};
}

} // namespace pimbpo::cstr
