#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace smpc {

/// Convex quadratic program
///   minimize    0.5 z'H z + f'z
///   subject to  G z <= h,   A_eq z = b_eq.
/// H must be positive semidefinite (validated by factorization attempt).
struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd f;
  Eigen::MatrixXd G;
  Eigen::VectorXd h;
  Eigen::MatrixXd A_eq;  ///< may be 0 x n
  Eigen::VectorXd b_eq;
};

enum class QpStatus { Optimal, Infeasible, Unbounded, NumericalError };

struct QpSolution {
  QpStatus status = QpStatus::NumericalError;
  Eigen::VectorXd z;       ///< minimizer (valid when Optimal)
  Eigen::VectorXd lambda;  ///< inequality multipliers, >= 0, one per G row
  Eigen::VectorXd mu;      ///< equality multipliers
  double objective = 0.0;
  double kkt_residual = 0.0;  ///< max violation across all KKT conditions
  int iterations = 0;
  std::vector<int> active_set;  ///< indices of active inequality rows
  /// Infeasibility certificate: G'farkas_ineq + A_eq'farkas_eq = 0 with
  /// farkas_ineq >= 0 and h'farkas_ineq + b_eq'farkas_eq < 0.
  Eigen::VectorXd farkas_ineq;
  Eigen::VectorXd farkas_eq;
};

/// One-shot solve.  Strictly convex problems go through a dual active-set
/// method; PSD-singular Hessians (including H = 0, i.e. pure LPs) are handled
/// by proximal regularization around the same core.  Warm-start hints are
/// deliberately not consumed: repeated solves of the same problem return
/// bit-identical results.
QpSolution solve_qp(const QpProblem& problem);

/// Serialize a problem for external inspection (debug aid).
std::string qp_to_json(const QpProblem& problem);

namespace detail {

/// Dual active-set core with a pre-factorized Hessian, reusable across many
/// solves that share H (and optionally G).  Not thread-safe; use one
/// workspace per thread.
class DualActiveSetSolver {
 public:
  /// Factorizes H (must be positive definite).  Throws NumericalError if the
  /// Cholesky factorization fails.
  explicit DualActiveSetSolver(const Eigen::MatrixXd& H);

  /// Solve with fresh linear term and constraints.  Equality rows are
  /// enforced first and never released.
  QpSolution solve(const Eigen::VectorXd& f, const Eigen::MatrixXd& A_eq,
                   const Eigen::VectorXd& b_eq, const Eigen::MatrixXd& G,
                   const Eigen::VectorXd& h);

 private:
  int n_;
  Eigen::MatrixXd H_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd j0_;  // inverse transpose of the Cholesky factor

  // Per-solve scratch (allocated once, reused).
  Eigen::MatrixXd J_, R_;
  Eigen::VectorXd d_, zstep_, rstep_, u_;
  std::vector<int> active_;
};

}  // namespace detail
}  // namespace smpc
