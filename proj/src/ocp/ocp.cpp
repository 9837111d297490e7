#include "pimbpo/ocp/ocp.hpp"

#include "pimbpo/cstr/plant.hpp"
#include "pimbpo/diff/params.hpp"

#include <stdexcept>

namespace pimbpo::ocp {

Eigen::Matrix<double, 6, 1> BoundParams::to_vector() const {
  Eigen::Matrix<double, 6, 1> v;
  v << c_lower, c_upper, T_lower, T_upper, l_lower, l_upper;
  return v;
}

BoundParams BoundParams::from_vector(const Eigen::Matrix<double, 6, 1> &v) {
  return {v[0], v[1], v[2], v[3], v[4], v[5]};
}

KoopmanMatrices KoopmanMatrices::from_params(const ad::ParamVector &p) { return {p["A"], p["B"], p["C"]}; }

namespace {

constexpr int kLatent = static_cast<int>(koopman::kLatentDim);

// Scaled state bounds and natural storage bounds, in slack order c, T, l.
constexpr double kLower[3] = {-1.0, -1.0, cstr::kStorage.lb};
constexpr double kUpper[3] = {1.0, 1.0, cstr::kStorage.ub};

} // namespace

OcpProblem::OcpProblem(KoopmanMatrices km, OcpConfig config) : km_(std::move(km)), config_(config) {
  if (km_.A.rows() != kLatent || km_.A.cols() != kLatent || km_.B.rows() != kLatent || km_.B.cols() != 2 ||
      km_.C.rows() != 2 || km_.C.cols() != kLatent)
    throw std::invalid_argument("Koopman matrices must be 8x8, 8x2 and 2x8");
  if (config_.horizon < 1) throw std::invalid_argument("horizon must be positive");
  if (!(config_.slack_penalty > 0) || !(config_.control_regularization > 0))
    throw std::invalid_argument("slack penalty and control regularization must be positive");

  const int Hn = config_.horizon;
  const Eigen::Index n = variables(), me = equalities(), mi = inequalities();

  H_ = Matrix::Zero(n, n);
  for (int t = 0; t < Hn; ++t)
    for (int j = 0; j < 2; ++j) H_(u_index(t, j), u_index(t, j)) = 2.0 * config_.control_regularization;
  for (int t = 0; t <= Hn; ++t)
    for (int j = 0; j < 3; ++j) H_(s_index(t, j), s_index(t, j)) = 2.0 * config_.slack_penalty;

  const double rho_gain = 0.5 * cstr::kProduction.width() * config_.dt;
  A_ = Matrix::Zero(me, n);
  for (int t = 0; t < Hn; ++t) {
    for (int k = 0; k < kLatent; ++k) {
      const Eigen::Index row = t * kLatent + k;
      A_(row, z_index(t + 1, k)) = 1.0;
      if (t >= 1)
        for (int j = 0; j < kLatent; ++j) A_(row, z_index(t, j)) = -km_.A(k, j);
      for (int j = 0; j < 2; ++j) A_(row, u_index(t, j)) = -km_.B(k, j);
    }
    const Eigen::Index row = Hn * kLatent + t;
    A_(row, l_index(t + 1)) = 1.0;
    if (t >= 1) A_(row, l_index(t)) = -1.0;
    A_(row, u_index(t, 0)) = -rho_gain;
  }

  G_ = Matrix::Zero(mi, n);
  dh_dtheta_ = Matrix::Zero(mi, 6);
  for (int t = 0; t <= Hn; ++t) {
    for (int j = 0; j < 3; ++j) {
      const Eigen::Index lo = 6 * t + 2 * j, hi = lo + 1;
      G_(lo, s_index(t, j)) = -1.0;
      G_(hi, s_index(t, j)) = -1.0;
      if (t >= 1) {
        if (j < 2) {
          for (int k = 0; k < kLatent; ++k) {
            G_(lo, z_index(t, k)) = -km_.C(j, k);
            G_(hi, z_index(t, k)) = km_.C(j, k);
          }
        } else {
          G_(lo, l_index(t)) = -1.0;
          G_(hi, l_index(t)) = 1.0;
        }
      }
      dh_dtheta_(lo, 2 * j) = -1.0;
      dh_dtheta_(hi, 2 * j + 1) = 1.0;
    }
  }
  Eigen::Index row = 6 * (Hn + 1);
  for (int t = 0; t <= Hn; ++t)
    for (int j = 0; j < 3; ++j) G_(row++, s_index(t, j)) = -1.0;
  for (int t = 0; t < Hn; ++t)
    for (int j = 0; j < 2; ++j) {
      G_(row++, u_index(t, j)) = 1.0;
      G_(row++, u_index(t, j)) = -1.0;
    }

  // Latents and storage follow from the controls through the dynamics.
  std::vector<Eigen::Index> dependent;
  for (int t = 1; t <= Hn; ++t)
    for (int k = 0; k < kLatent; ++k) dependent.push_back(z_index(t, k));
  for (int t = 1; t <= Hn; ++t) dependent.push_back(l_index(t));
  solver_ = std::make_shared<const QpSolver>(H_, A_, G_, config_.qp, std::move(dependent));
}

Eigen::Index OcpProblem::variables() const {
  const int Hn = config_.horizon;
  return 2 * Hn + kLatent * Hn + Hn + 3 * (Hn + 1);
}
Eigen::Index OcpProblem::equalities() const { return (kLatent + 1) * config_.horizon; }
Eigen::Index OcpProblem::inequalities() const {
  const int Hn = config_.horizon;
  return 6 * (Hn + 1) + 3 * (Hn + 1) + 4 * Hn;
}
Eigen::Index OcpProblem::z_index(int t, int k) const { return 2 * config_.horizon + (t - 1) * kLatent + k; }
Eigen::Index OcpProblem::l_index(int t) const { return (2 + kLatent) * config_.horizon + (t - 1); }
Eigen::Index OcpProblem::s_index(int t, int j) const { return (3 + kLatent) * config_.horizon + 3 * t + j; }

namespace {

void check_instance(const OcpInstance &inst, int horizon) {
  if (inst.z0.size() != kLatent) throw std::invalid_argument("z0 must have 8 entries");
  if (inst.prices.size() != horizon + 1) throw std::invalid_argument("price vector must cover horizon + 1 points");
  if (!inst.z0.allFinite() || !inst.prices.allFinite() || !std::isfinite(inst.l0) || !inst.theta.to_vector().allFinite())
    throw std::invalid_argument("OCP instance contains non-finite values");
}

} // namespace

Vector OcpProblem::q_vector(const OcpInstance &inst) const {
  Vector q = Vector::Zero(variables());
  const double gain = config_.cost_scale * config_.dt * 0.5 * cstr::kCoolant.width();
  for (int t = 0; t < config_.horizon; ++t) q[u_index(t, 1)] = gain * inst.prices[t];
  return q;
}

double OcpProblem::cost_constant(const OcpInstance &inst) const {
  const double F_mid = cstr::kCoolant.lb + 0.5 * cstr::kCoolant.width();
  return config_.cost_scale * config_.dt * F_mid * inst.prices.head(config_.horizon).sum();
}

Vector OcpProblem::b_vector(const OcpInstance &inst) const {
  const int Hn = config_.horizon;
  Vector b = Vector::Zero(equalities());
  b.head(kLatent) = km_.A * inst.z0;
  const double rho_mid = cstr::kProduction.lb + 0.5 * cstr::kProduction.width();
  for (int t = 0; t < Hn; ++t) b[Hn * kLatent + t] = config_.dt * (rho_mid - cstr::kProduction.ss);
  b[Hn * kLatent] += inst.l0;
  return b;
}

Vector OcpProblem::h_vector(const OcpInstance &inst) const {
  const int Hn = config_.horizon;
  Vector h = Vector::Zero(inequalities());
  const Eigen::Vector2d x0 = km_.C * inst.z0;
  const auto theta = inst.theta.to_vector();
  for (int t = 0; t <= Hn; ++t)
    for (int j = 0; j < 3; ++j) {
      const Eigen::Index lo = 6 * t + 2 * j, hi = lo + 1;
      h[lo] = -kLower[j] - theta[2 * j];
      h[hi] = kUpper[j] + theta[2 * j + 1];
      if (t == 0) {
        // Fixed initial point: its value moves to the right-hand side.
        const double v = j < 2 ? x0[j] : inst.l0;
        h[lo] += v;
        h[hi] -= v;
      }
    }
  h.tail(4 * Hn).setOnes();
  return h;
}

Qp OcpProblem::build_qp(const OcpInstance &inst) const {
  check_instance(inst, config_.horizon);
  return {H_, q_vector(inst), A_, b_vector(inst), G_, h_vector(inst)};
}

OcpSolution OcpProblem::solve(const OcpInstance &inst) const {
  check_instance(inst, config_.horizon);
  const int Hn = config_.horizon;
  const QpSolution qs = solver_->solve(q_vector(inst), b_vector(inst), h_vector(inst));
  OcpSolution out;
  out.status = qs.status;
  out.iterations = qs.iterations;
  out.polished = qs.polished;
  out.x = qs.x;
  out.eq_duals = qs.nu;
  out.ineq_duals = qs.lambda;
  out.objective = qs.objective + cost_constant(inst);
  out.controls.resize(Hn, 2);
  out.latents.resize(Hn + 1, kLatent);
  out.storage.resize(Hn + 1);
  out.slacks.resize(Hn + 1, 3);
  out.latents.row(0) = inst.z0.transpose();
  out.storage[0] = inst.l0;
  for (int t = 0; t < Hn; ++t)
    for (int j = 0; j < 2; ++j) out.controls(t, j) = qs.x[u_index(t, j)];
  for (int t = 1; t <= Hn; ++t) {
    for (int k = 0; k < kLatent; ++k) out.latents(t, k) = qs.x[z_index(t, k)];
    out.storage[t] = qs.x[l_index(t)];
  }
  for (int t = 0; t <= Hn; ++t)
    for (int j = 0; j < 3; ++j) out.slacks(t, j) = qs.x[s_index(t, j)];
  out.states = out.latents * km_.C.transpose();
  return out;
}

OcpProblem::Gradient OcpProblem::grad_theta_B(const OcpInstance &inst, const OcpSolution &sol) const {
  check_instance(inst, config_.horizon);
  if (!sol.ok()) throw std::invalid_argument("gradient requires an optimal solution");
  QpSolution qs;
  qs.x = sol.x;
  qs.lambda = sol.ineq_duals;
  const Sensitivity sens = solver_->dx_dh(qs, h_vector(inst), dh_dtheta_);
  Gradient g;
  g.du0.row(0) = sens.dx.row(u_index(0, 0));
  g.du0.row(1) = sens.dx.row(u_index(0, 1));
  g.regularized = sens.regularized;
  g.weakly_active = sens.weakly_active;
  return g;
}

nlohmann::json to_json(const OcpInstance &inst, const OcpSolution &sol) {
  auto vec = [](const Vector &v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  auto mat = [](const Matrix &m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      std::vector<double> r(static_cast<std::size_t>(m.cols()));
      for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
      rows.push_back(r);
    }
    return rows;
  };
  nlohmann::json theta;
  const auto tv = inst.theta.to_vector();
  for (int i = 0; i < 6; ++i) theta[kBoundNames[static_cast<std::size_t>(i)]] = tv[i];
  return {{"instance",
           {{"z0", vec(inst.z0)}, {"l0", inst.l0}, {"prices", vec(inst.prices)}, {"theta", theta},
            {"hash", instance_hash(inst)}}},
          {"solution",
           {{"status", to_string(sol.status)},
            {"iterations", sol.iterations},
            {"objective", sol.objective},
            {"controls", mat(sol.controls)},
            {"states", mat(sol.states)},
            {"storage", vec(sol.storage)},
            {"slacks", mat(sol.slacks)}}}};
}

std::uint64_t instance_hash(const OcpInstance &inst) {
  std::uint64_t h = ad::fnv1a(inst.z0.data(), sizeof(double) * static_cast<std::size_t>(inst.z0.size()));
  h = ad::fnv1a(&inst.l0, sizeof(double), h);
  h = ad::fnv1a(inst.prices.data(), sizeof(double) * static_cast<std::size_t>(inst.prices.size()), h);
  const auto tv = inst.theta.to_vector();
  return ad::fnv1a(tv.data(), sizeof(double) * 6, h);
}

} // namespace pimbpo::ocp
