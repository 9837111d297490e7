#include "pimbpo/ocp/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pimbpo::ocp {

std::string to_string(QpStatus s) {
  switch (s) {
  case QpStatus::Optimal: return "optimal";
  case QpStatus::MaxIterations: return "max-iterations";
  case QpStatus::NumericalFailure: return "numerical-failure";
  }
  return "unknown";
}

double KktResiduals::max() const {
  return std::max({stationarity, equality, inequality, complementarity, dual_sign});
}

KktResiduals kkt_residuals(const Qp &qp, const QpSolution &sol) {
  KktResiduals r;
  Vector grad = qp.H * sol.x + qp.q;
  if (qp.A.rows() > 0) grad += qp.A.transpose() * sol.nu;
  if (qp.G.rows() > 0) grad += qp.G.transpose() * sol.lambda;
  r.stationarity = grad.size() ? grad.cwiseAbs().maxCoeff() : 0.0;
  if (qp.A.rows() > 0) r.equality = (qp.A * sol.x - qp.b).cwiseAbs().maxCoeff();
  if (qp.G.rows() > 0) {
    const Vector slack = qp.h - qp.G * sol.x;
    r.inequality = std::max(0.0, -slack.minCoeff());
    r.complementarity = slack.cwiseProduct(sol.lambda).cwiseAbs().maxCoeff();
    r.dual_sign = std::max(0.0, -sol.lambda.minCoeff());
  }
  return r;
}

QpSolver::QpSolver(Matrix H, Matrix A, Matrix G, QpSettings settings, std::vector<Eigen::Index> dependent)
    : H_(std::move(H)), A_(std::move(A)), G_(std::move(G)), settings_(settings) {
  const Eigen::Index n = H_.rows();
  if (H_.cols() != n || (A_.rows() > 0 && A_.cols() != n) || (G_.rows() > 0 && G_.cols() != n))
    throw std::invalid_argument("QP matrices have inconsistent shapes");
  if (A_.cols() != n) A_.resize(0, n);
  if (G_.cols() != n) G_.resize(0, n);
  const Eigen::Index m = A_.rows();
  if (m == 0) {
    Z_ = Matrix::Identity(n, n);
    range_ = Matrix::Zero(n, 0);
    dual_ = Matrix::Zero(0, n);
  } else {
    // A' P = Q R, so A = P R1' Q1' on the leading m columns.
    Eigen::ColPivHouseholderQR<Matrix> qr(A_.transpose());
    if (qr.rank() < m) throw std::invalid_argument("equality constraints are rank deficient");
    const Matrix Q = qr.householderQ() * Matrix::Identity(n, n);
    const Matrix R1 = qr.matrixR().topLeftCorner(m, m).triangularView<Eigen::Upper>();
    const Matrix Q1 = Q.leftCols(m);
    Z_ = Q.rightCols(n - m);
    const Matrix P = qr.colsPermutation();
    // x0 = Q1 R1^{-T} P' b ; nu = P R1^{-1} Q1' r.
    const Matrix R1inv = R1.triangularView<Eigen::Upper>().solve(Matrix::Identity(m, m));
    range_ = Q1 * R1inv.transpose() * P.transpose();
    dual_ = P * R1inv * Q1.transpose();
    if (!dependent.empty()) {
      if (static_cast<Eigen::Index>(dependent.size()) != m)
        throw std::invalid_argument("need exactly one dependent variable per equality");
      std::vector<bool> is_dep(static_cast<std::size_t>(n), false);
      for (auto i : dependent) {
        if (i < 0 || i >= n || is_dep[static_cast<std::size_t>(i)])
          throw std::invalid_argument("dependent variables must be distinct and in range");
        is_dep[static_cast<std::size_t>(i)] = true;
      }
      std::vector<Eigen::Index> free;
      for (Eigen::Index i = 0; i < n; ++i)
        if (!is_dep[static_cast<std::size_t>(i)]) free.push_back(i);
      Matrix Ad(m, m), Af(m, n - m);
      for (Eigen::Index j = 0; j < m; ++j) Ad.col(j) = A_.col(dependent[static_cast<std::size_t>(j)]);
      for (Eigen::Index j = 0; j < n - m; ++j) Af.col(j) = A_.col(free[static_cast<std::size_t>(j)]);
      Eigen::FullPivLU<Matrix> lu(Ad);
      if (!lu.isInvertible()) throw std::invalid_argument("dependent block of the equalities is singular");
      const Matrix dep_free = -lu.solve(Af);
      const Matrix dep_b = lu.inverse();
      Z_ = Matrix::Zero(n, n - m);
      range_ = Matrix::Zero(n, m);
      for (Eigen::Index j = 0; j < n - m; ++j) Z_(free[static_cast<std::size_t>(j)], j) = 1.0;
      for (Eigen::Index j = 0; j < m; ++j) {
        Z_.row(dependent[static_cast<std::size_t>(j)]) = dep_free.row(j);
        range_.row(dependent[static_cast<std::size_t>(j)]) = dep_b.row(j);
      }
    }
  }
  Pr_ = Z_.transpose() * H_ * Z_;
  Pr_ = 0.5 * (Pr_ + Pr_.transpose());
  Gr_ = G_ * Z_;
  for (Eigen::Index i = 0; i < Gr_.rows(); ++i) {
    const double cut = 1e-15 * Gr_.row(i).cwiseAbs().maxCoeff();
    for (Eigen::Index j = 0; j < Gr_.cols(); ++j)
      if (std::abs(Gr_(i, j)) <= cut) Gr_(i, j) = 0.0;
  }
  Gs_ = Gr_.sparseView();
  Gs_.makeCompressed();
  start_.compute(Pr_ + Gr_.transpose() * Gr_);
}

namespace {

double step_to_boundary(const Vector &v, const Vector &dv) {
  double a = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv[i] < 0) a = std::min(a, -v[i] / dv[i]);
  return a;
}

bool finite(const Vector &v) { return v.allFinite(); }

} // namespace

QpSolution QpSolver::solve(const Vector &q, const Vector &b, const Vector &h) const {
  const Eigen::Index n = H_.rows(), k = Z_.cols(), m = G_.rows();
  if (q.size() != n || b.size() != A_.rows() || h.size() != m)
    throw std::invalid_argument("QP vectors have inconsistent sizes");
  const double tol = settings_.tolerance;

  const Vector x0 = range_ * b;
  const Vector c = Z_.transpose() * (H_ * x0 + q);
  const Vector hr = h - G_ * x0;

  QpSolution sol;
  Vector y = Vector::Zero(k), s, z;
  bool converged = false;

  if (m == 0) {
    Eigen::LDLT<Matrix> ldlt(Pr_);
    y = ldlt.solve(-c);
    z.resize(0);
    converged = finite(y);
  } else {
    {
      y = start_.solve(-c + Gs_.transpose() * hr);
      if (!finite(y)) y.setZero();
    }
    s = (hr - Gs_ * y).cwiseMax(1.0);
    z = Vector::Ones(m);
    const double scale_p = 1.0 + hr.cwiseAbs().maxCoeff();
    const double scale_d = 1.0 + (c.size() ? c.cwiseAbs().maxCoeff() : 0.0);

    // Best iterate by scaled KKT merit; kept when the iteration stalls or
    // breaks down close to the optimum.
    Vector by = y, bs = s, bz = z;
    double best_merit = std::numeric_limits<double>::infinity();
    int since_best = 0;
    for (int it = 0; it < settings_.max_iterations; ++it) {
      const Vector rd = Pr_ * y + c + Gs_.transpose() * z;
      const Vector rp = Gs_ * y + s - hr;
      const double mu = s.dot(z) / static_cast<double>(m);
      sol.iterations = it;
      const double dscale = scale_d + (k ? std::max((Pr_ * y).cwiseAbs().maxCoeff(),
                                                    Vector(Gs_.transpose() * z).cwiseAbs().maxCoeff()) : 0.0);
      if ((k == 0 || rd.cwiseAbs().maxCoeff() <= tol * dscale) && rp.cwiseAbs().maxCoeff() <= tol * scale_p &&
          mu <= tol) {
        converged = true;
        break;
      }
      const double merit = std::max({k ? rd.cwiseAbs().maxCoeff() / dscale : 0.0, rp.cwiseAbs().maxCoeff() / scale_p, mu});
      if (merit < best_merit) {
        best_merit = merit;
        by = y;
        bs = s;
        bz = z;
        since_best = 0;
      } else if (best_merit < 1e-6 && ++since_best >= 10) {
        // Only near the optimum: far from it the merit can rise for many
        // steps while an infeasible start is pulled onto the constraints.
        break;
      }
      const Vector d = z.cwiseQuotient(s);
      Matrix K = Pr_;
      for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator a(Gs_, i); a; ++a)
          for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator b(Gs_, i); b; ++b)
            K(a.col(), b.col()) += d[i] * a.value() * b.value();
      Eigen::LLT<Matrix> llt(K);
      Eigen::LDLT<Matrix> ldlt;
      const bool use_llt = llt.info() == Eigen::Success;
      if (!use_llt) {
        K.diagonal().array() += settings_.regularization;
        ldlt.compute(K);
      }
      // Solves P dy + G'dz = -r1, G dy + ds = -r2, s.dz + z.ds = -r3 through
      // the normal equations, then refines against the full system: the
      // normal matrix loses digits once z/s spreads over many decades.
      auto solve_once = [&](const Vector &r1, const Vector &r2, const Vector &r3, Vector &dy, Vector &dz, Vector &ds) {
        const Vector rhs = -r1 - Gs_.transpose() * (d.cwiseProduct(r2) - r3.cwiseQuotient(s));
        dy = use_llt ? Vector(llt.solve(rhs)) : Vector(ldlt.solve(rhs));
        const Vector gdy = Gs_ * dy;
        dz = d.cwiseProduct(gdy + r2) - r3.cwiseQuotient(s);
        ds = -r2 - gdy;
      };
      auto newton = [&](const Vector &rc, Vector &dy, Vector &dz, Vector &ds) {
        solve_once(rd, rp, rc, dy, dz, ds);
        for (int r = 0; r < 2; ++r) {
          const Vector e1 = Pr_ * dy + Gs_.transpose() * dz + rd;
          const Vector e2 = Gs_ * dy + ds + rp;
          const Vector e3 = s.cwiseProduct(dz) + z.cwiseProduct(ds) + rc;
          Vector cy, cz, cs;
          solve_once(e1, e2, e3, cy, cz, cs);
          dy += cy;
          dz += cz;
          ds += cs;
        }
      };
      Vector dy, dz, ds;
      newton(s.cwiseProduct(z), dy, dz, ds);
      const double a_aff = std::min(step_to_boundary(s, ds), step_to_boundary(z, dz));
      const double mu_aff = (s + a_aff * ds).dot(z + a_aff * dz) / static_cast<double>(m);
      const double sigma = std::pow(std::max(0.0, mu_aff) / mu, 3);
      const Vector rc = s.cwiseProduct(z) + ds.cwiseProduct(dz) - Vector::Constant(m, sigma * mu);
      newton(rc, dy, dz, ds);
      const double a = std::min(1.0, 0.99 * std::min(step_to_boundary(s, ds), step_to_boundary(z, dz)));
      const Vector ny = y + a * dy, nz = z + a * dz, ns = s + a * ds;
      if (!finite(ny) || !finite(nz) || !finite(ns) || (ns.array() <= 0).any() || (nz.array() <= 0).any()) break;
      y = ny;
      z = nz;
      s = ns;
    }
    if (!converged) {
      y = by;
      s = bs;
      z = bz;
    }

    if (settings_.polish && finite(y) && finite(z)) {
      std::vector<Eigen::Index> act;
      for (Eigen::Index i = 0; i < m; ++i)
        if (z[i] > s[i]) act.push_back(i);
      const double feas_tol = 1e-9 * (1.0 + hr.cwiseAbs().maxCoeff());
      const double dual_tol = 1e-9 * (1.0 + z.cwiseAbs().maxCoeff());
      const double stat_tol = 1e-9 * (1.0 + c.cwiseAbs().maxCoeff());
      // Equality-constrained solves on a working set seeded by the
      // interior-point guess; a few primal-dual corrections handle
      // degenerate vertices where the guess is slightly off.
      for (int round = 0; round < 2 * static_cast<int>(m) + 4; ++round) {
        const auto na = static_cast<Eigen::Index>(act.size());
        Matrix K = Matrix::Zero(k + na, k + na);
        Vector rhs(k + na);
        K.topLeftCorner(k, k) = Pr_;
        rhs.head(k) = -c;
        for (Eigen::Index j = 0; j < na; ++j) {
          K.block(0, k + j, k, 1) = Gr_.row(act[j]).transpose();
          K.block(k + j, 0, 1, k) = Gr_.row(act[j]);
          rhs[k + j] = hr[act[j]];
        }
        // Regularized solve refined against the exact system; tolerates
        // dependent working rows.
        const double delta = settings_.regularization;
        Matrix Kreg = K;
        Kreg.topLeftCorner(k, k).diagonal().array() += delta;
        Kreg.bottomRightCorner(na, na).diagonal().array() -= delta;
        Eigen::PartialPivLU<Matrix> lu(Kreg);
        Vector w = lu.solve(rhs);
        const double rtol = 1e-14 * (1.0 + rhs.cwiseAbs().maxCoeff());
        for (int r = 0; r < 20 && finite(w); ++r) {
          const Vector res = rhs - K * w;
          if (res.cwiseAbs().maxCoeff() <= rtol) break;
          w += lu.solve(res);
        }
        if (!finite(w)) break;
        const Vector yp = w.head(k);
        Vector zp = Vector::Zero(m);
        for (Eigen::Index j = 0; j < na; ++j) zp[act[j]] = w[k + j];
        const Vector slack = hr - Gr_ * yp;
        const double stat = k ? (Pr_ * yp + c + Gr_.transpose() * zp).cwiseAbs().maxCoeff() : 0.0;
        Eigen::Index worst_dual = 0, worst_slack = 0;
        const double min_dual = na ? zp.minCoeff(&worst_dual) : 0.0;
        const double min_slack = slack.minCoeff(&worst_slack);
        if (min_slack >= -feas_tol && min_dual >= -dual_tol && stat <= stat_tol) {
          y = yp;
          z = zp.cwiseMax(0.0);
          s = slack.cwiseMax(0.0);
          sol.polished = true;
          converged = true;
          break;
        }
        if (stat > stat_tol) break;
        if (min_dual < -dual_tol)
          act.erase(std::find(act.begin(), act.end(), worst_dual));
        else
          act.push_back(worst_slack);
      }
    }
  }

  sol.x = x0 + Z_ * y;
  sol.lambda = z;
  Vector r = H_ * sol.x + q;
  if (m > 0) r += G_.transpose() * z;
  sol.nu = dual_ * (-r);
  sol.objective = 0.5 * sol.x.dot(H_ * sol.x) + q.dot(sol.x);
  if (!finite(sol.x) || !finite(sol.lambda) || !std::isfinite(sol.objective))
    sol.status = QpStatus::NumericalFailure;
  else
    sol.status = converged ? QpStatus::Optimal : QpStatus::MaxIterations;
  return sol;
}

Sensitivity QpSolver::dx_dh(const QpSolution &sol, const Vector &h, const Matrix &dh) const {
  const Eigen::Index k = Z_.cols(), m = G_.rows();
  if (dh.rows() != m) throw std::invalid_argument("dh must have one row per inequality");
  Sensitivity out;
  const Vector slack = h - G_ * sol.x;
  std::vector<Eigen::Index> act;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (sol.lambda[i] > settings_.active_threshold)
      act.push_back(i);
    else if (std::abs(slack[i]) <= 1e-9)
      ++out.weakly_active;
  }
  const auto na = static_cast<Eigen::Index>(act.size());
  out.active = static_cast<int>(na);
  Matrix K = Matrix::Zero(k + na, k + na);
  Matrix rhs = Matrix::Zero(k + na, dh.cols());
  K.topLeftCorner(k, k) = Pr_;
  for (Eigen::Index j = 0; j < na; ++j) {
    K.block(0, k + j, k, 1) = Gr_.row(act[j]).transpose();
    K.block(k + j, 0, 1, k) = Gr_.row(act[j]);
    rhs.row(k + j) = dh.row(act[j]);
  }
  Matrix w = Eigen::PartialPivLU<Matrix>(K).solve(rhs);
  const double rtol = 1e-10 * (1.0 + rhs.cwiseAbs().maxCoeff());
  if (!w.allFinite() || (K * w - rhs).cwiseAbs().maxCoeff() > rtol) {
    const double d = settings_.regularization;
    Matrix Kreg = K;
    Kreg.topLeftCorner(k, k).diagonal().array() += d;
    Kreg.bottomRightCorner(na, na).diagonal().array() -= d;
    w = Eigen::PartialPivLU<Matrix>(Kreg).solve(rhs);
    out.regularized = true;
  }
  out.dx = Z_ * w.topRows(k);
  return out;
}

QpSolution solve_qp(const Qp &qp, const QpSettings &settings) {
  const QpSolver solver(qp.H, qp.A, qp.G, settings);
  return solver.solve(qp.q, qp.b.size() ? qp.b : Vector(Vector::Zero(qp.A.rows())), qp.h);
}

} // namespace pimbpo::ocp
