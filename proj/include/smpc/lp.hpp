#pragma once

#include <Eigen/Dense>

namespace smpc {

enum class LpStatus {
  Optimal,     ///< finite maximizer found
  Infeasible,  ///< {x : A x <= b} is empty (Farkas certificate available)
  Unbounded,   ///< feasible but the objective grows without bound
};

struct LpResult {
  LpStatus status = LpStatus::Optimal;
  Eigen::VectorXd x;       ///< maximizer (valid when status == Optimal)
  double value = 0.0;      ///< c'x at the maximizer
  Eigen::VectorXd farkas;  ///< y >= 0 with A'y = 0 and b'y < 0 when infeasible
};

/// Maximize c'x over the polyhedron {x in R^n : A x <= b}, x unrestricted.
///
/// Dense revised simplex on the dual problem; intended for the small
/// dimensions that arise here (n up to ~10, row counts up to a few thousand).
/// Bland's rule is used throughout, so the method terminates on every input.
LpResult maximize_linear(const Eigen::VectorXd& c, const Eigen::MatrixXd& A,
                         const Eigen::VectorXd& b);

/// True if {x : A x <= b} is empty.  When a certificate pointer is supplied
/// and the set is empty, *certificate receives y >= 0 with A'y = 0, b'y < 0.
bool halfspaces_empty(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                      Eigen::VectorXd* certificate = nullptr);

}  // namespace smpc
