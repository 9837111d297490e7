#pragma once

#include "pimbpo/koopman/koopman.hpp"
#include "pimbpo/ocp/qp.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <memory>

namespace pimbpo::ocp {

/// Learnable offsets of the six bounds: c and T in scaled units, storage in
/// hours. A positive lower offset tightens, a positive upper offset relaxes.
struct BoundParams {
  double c_lower = 0.0;
  double c_upper = 0.0;
  double T_lower = 0.0;
  double T_upper = 0.0;
  double l_lower = 0.0;
  double l_upper = 0.0;

  [[nodiscard]] Eigen::Matrix<double, 6, 1> to_vector() const;
  static BoundParams from_vector(const Eigen::Matrix<double, 6, 1> &v);
};
inline constexpr std::array<const char *, 6> kBoundNames = {"c_lower", "c_upper", "T_lower",
                                                            "T_upper", "l_lower", "l_upper"};

struct OcpConfig {
  int horizon = 9;                      // control steps; 10 prediction points
  double slack_penalty = 1e3;           // M, on squared slacks
  double control_regularization = 1e-6; // on squared scaled controls
  /// Multiplies F p; balances coolant cost against the slack penalty.
  double cost_scale = 5e-6;
  double dt = 1.0;
  QpSettings qp;
};

/// Lifted linear dynamics in column-vector form, read from Koopman params.
struct KoopmanMatrices {
  Matrix A; // 8x8
  Matrix B; // 8x2
  Matrix C; // 2x8
  static KoopmanMatrices from_params(const ad::ParamVector &p);
};

/// One receding-horizon problem.
struct OcpInstance {
  Vector z0;     // encoded initial state
  double l0 = 0; // storage, hours
  Vector prices; // horizon + 1 values, first is the current hour
  BoundParams theta;
};

struct OcpSolution {
  Matrix controls; // horizon x 2, scaled (rho, F)
  Matrix latents;  // (horizon + 1) x 8, first row z0
  Matrix states;   // (horizon + 1) x 2, decoded scaled (c, T)
  Vector storage;  // horizon + 1, first l0
  Matrix slacks;   // (horizon + 1) x 3: c, T, storage
  Vector x; // raw QP variables
  Vector eq_duals;
  Vector ineq_duals;
  double objective = 0.0; // includes the constant part of the coolant cost
  QpStatus status = QpStatus::NumericalFailure;
  int iterations = 0;
  bool polished = false;
  [[nodiscard]] Eigen::Vector2d first_control() const { return controls.row(0).transpose(); }
  [[nodiscard]] bool ok() const { return status == QpStatus::Optimal; }
};

/// Variable layout: [u (2 per step) | z_1..z_H (8 each) | l_1..l_H | s (3 per point)].
/// Inequalities, per point t = 0..H: -c - s_c <= ..., c - s_c <= ...,
/// then T and storage alike; then -s <= 0; then the control box.
class OcpProblem {
public:
  OcpProblem(KoopmanMatrices km, OcpConfig config = {});

  [[nodiscard]] const OcpConfig &config() const { return config_; }
  [[nodiscard]] const KoopmanMatrices &koopman() const { return km_; }

  [[nodiscard]] Eigen::Index variables() const;
  [[nodiscard]] Eigen::Index equalities() const;
  [[nodiscard]] Eigen::Index inequalities() const;
  [[nodiscard]] Eigen::Index u_index(int t, int j) const { return 2 * t + j; }
  [[nodiscard]] Eigen::Index z_index(int t, int k) const; // t in 1..H
  [[nodiscard]] Eigen::Index l_index(int t) const;        // t in 1..H
  [[nodiscard]] Eigen::Index s_index(int t, int j) const; // t in 0..H

  /// Canonical QP; the objective omits the constant coolant offset returned
  /// by cost_constant().
  [[nodiscard]] Qp build_qp(const OcpInstance &inst) const;
  [[nodiscard]] double cost_constant(const OcpInstance &inst) const;
  /// Bound right-hand sides derivative dh/dtheta (inequalities x 6).
  [[nodiscard]] const Matrix &dh_dtheta() const { return dh_dtheta_; }

  [[nodiscard]] OcpSolution solve(const OcpInstance &inst) const;

  struct Gradient {
    Eigen::Matrix<double, 2, 6> du0; // d first control / d theta
    bool regularized = false;
    int weakly_active = 0;
  };
  /// Implicit derivative of the first-step controls with respect to theta.
  [[nodiscard]] Gradient grad_theta_B(const OcpInstance &inst, const OcpSolution &sol) const;

private:
  [[nodiscard]] Vector q_vector(const OcpInstance &inst) const;
  [[nodiscard]] Vector b_vector(const OcpInstance &inst) const;
  [[nodiscard]] Vector h_vector(const OcpInstance &inst) const;

  KoopmanMatrices km_;
  OcpConfig config_;
  Matrix H_, A_, G_;
  Matrix dh_dtheta_;
  std::shared_ptr<const QpSolver> solver_;
};

[[nodiscard]] nlohmann::json to_json(const OcpInstance &inst, const OcpSolution &sol);
/// FNV-1a over the instance's raw values, for regression fixtures.
[[nodiscard]] std::uint64_t instance_hash(const OcpInstance &inst);

} // namespace pimbpo::ocp
