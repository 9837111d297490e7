#pragma once

#include <Eigen/Core>

#include <stdexcept>

namespace pimbpo::cstr {

struct CstrParams {
  double volume = 20.0;
  double reaction_constant = 300.0; // 1/h
  double activation_energy = 5.0;
  double feed_temperature = 0.3947;
  double heat_transfer = 1.95e-4;
  double coolant_temperature = 0.3816;
};

/// Operating box of one variable. Scaling maps lb to -1 and ub to +1.
struct Bounds {
  double lb;
  double ub;
  double ss;

  [[nodiscard]] constexpr double width() const { return ub - lb; }
  [[nodiscard]] constexpr double scale(double x) const { return 2.0 * (x - lb) / (ub - lb) - 1.0; }
  [[nodiscard]] constexpr double unscale(double s) const { return lb + 0.5 * (s + 1.0) * (ub - lb); }
  [[nodiscard]] constexpr double clip(double x) const { return x < lb ? lb : (x > ub ? ub : x); }
};

inline constexpr Bounds kConcentration{0.1231, 0.1504, 0.1367};
inline constexpr Bounds kTemperature{0.6, 0.8, 0.7293};
inline constexpr Bounds kProduction{0.8, 1.2, 1.0};
inline constexpr Bounds kCoolant{0.0, 700.0, 390.0};
/// Hours of steady-state production held in the product buffer.
inline constexpr Bounds kStorage{0.0, 6.0, 1.5};

struct SysState {
  double c = kConcentration.ss;
  double T = kTemperature.ss;
};

struct Action {
  double rho = kProduction.ss;
  double F = kCoolant.ss;
};

inline constexpr SysState kSteadyState{kConcentration.ss, kTemperature.ss};
inline constexpr Action kSteadyAction{kProduction.ss, kCoolant.ss};

[[nodiscard]] Eigen::Vector2d scale_state(const SysState &x);
[[nodiscard]] SysState unscale_state(const Eigen::Vector2d &s);
[[nodiscard]] Eigen::Vector2d scale_action(const Action &u);
[[nodiscard]] Action unscale_action(const Eigen::Vector2d &s);
[[nodiscard]] Action clip_action(const Action &u);

class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

class IntegrationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// c * k * exp(-N / T); the term the physics-informed models treat as unknown.
[[nodiscard]] double reaction_rate(const SysState &x, const CstrParams &p = {});

/// Right-hand side (dc/dt, dT/dt) in 1/h. Throws DomainError for T <= 0.
[[nodiscard]] Eigen::Vector2d derivatives(const SysState &x, const Action &u,
                                          const CstrParams &p = {});

/// Classic RK4 over [0, dt] with zero-order-hold controls.
[[nodiscard]] SysState integrate_step(const SysState &x, const Action &u, const CstrParams &p = {},
                                      double dt = 1.0, int substeps = 20);

} // namespace pimbpo::cstr
