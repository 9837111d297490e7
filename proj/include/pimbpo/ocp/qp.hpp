#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <string>
#include <vector>

namespace pimbpo::ocp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// min 0.5 x'Hx + q'x  s.t.  A x = b,  G x <= h.
struct Qp {
  Matrix H;
  Vector q;
  Matrix A;
  Vector b;
  Matrix G;
  Vector h;
};

enum class QpStatus { Optimal, MaxIterations, NumericalFailure };
[[nodiscard]] std::string to_string(QpStatus s);

struct QpSettings {
  int max_iterations = 100;
  double tolerance = 1e-10;
  /// Re-solve the KKT system on the identified active set after the
  /// interior-point phase; kept only when it verifies.
  bool polish = true;
  /// Dual value above which an inequality counts as active.
  double active_threshold = 1e-9;
  double regularization = 1e-8;
};

struct QpSolution {
  Vector x;
  Vector nu;     // equality duals
  Vector lambda; // inequality duals, >= 0
  double objective = 0.0;
  QpStatus status = QpStatus::NumericalFailure;
  int iterations = 0;
  bool polished = false;
};

struct KktResiduals {
  double stationarity = 0.0;
  double equality = 0.0;
  double inequality = 0.0; // max(0, Gx - h)
  double complementarity = 0.0;
  double dual_sign = 0.0;  // max(0, -lambda)
  [[nodiscard]] double max() const;
};
[[nodiscard]] KktResiduals kkt_residuals(const Qp &qp, const QpSolution &sol);

struct Sensitivity {
  Matrix dx;           // n x k
  bool regularized = false;
  int active = 0;
  int weakly_active = 0; // zero dual and zero slack: derivative is one-sided
};

/// Dense convex QP solver with a cached nullspace reduction of the equality
/// constraints. H, A and G are fixed at construction; q, b and h vary per
/// solve. A must have full row rank and Z'HZ must be positive semidefinite.
/// With `dependent` naming one variable per equality whose columns of A form
/// an invertible block, those variables are eliminated directly and the
/// remaining ones stay in their own coordinates; otherwise an orthonormal
/// nullspace basis is used.
class QpSolver {
public:
  QpSolver(Matrix H, Matrix A, Matrix G, QpSettings settings = {}, std::vector<Eigen::Index> dependent = {});

  [[nodiscard]] Eigen::Index variables() const { return H_.rows(); }
  [[nodiscard]] Eigen::Index equalities() const { return A_.rows(); }
  [[nodiscard]] Eigen::Index inequalities() const { return G_.rows(); }
  [[nodiscard]] const QpSettings &settings() const { return settings_; }

  [[nodiscard]] QpSolution solve(const Vector &q, const Vector &b, const Vector &h) const;

  /// Derivative of the solution with respect to h along the columns of
  /// dh (m x k), by implicit differentiation of the KKT system on the
  /// active set. A singular active-set system is solved with diagonal
  /// damping and reported through `regularized`.
  [[nodiscard]] Sensitivity dx_dh(const QpSolution &sol, const Vector &h, const Matrix &dh) const;

private:
  Matrix H_, A_, G_;
  QpSettings settings_;
  Matrix Z_;      // nullspace basis of A
  Matrix range_;  // x0 = range_ * b, minimum-norm particular solution
  Matrix dual_;   // nu = dual_ * r solves A' nu = r in least squares
  Matrix Pr_;     // Z'HZ
  Matrix Gr_;     // GZ, entries below round-off pruned to zero
  Eigen::SparseMatrix<double, Eigen::RowMajor> Gs_; // Gr_ in sparse form
  Eigen::LDLT<Matrix> start_;                       // least-squares starting point
};

/// Solves a single QP without caching.
[[nodiscard]] QpSolution solve_qp(const Qp &qp, const QpSettings &settings = {});

} // namespace pimbpo::ocp
