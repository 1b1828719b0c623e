#pragma once

#include <Eigen/Dense>

namespace smpc {

/// Axis-aligned box {x : lower <= x <= upper}.
struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

/// Halfspace intersection {x : H x <= b}.  `empty` is set when emptiness has
/// been certified during construction; it is a flag, not an exception, so
/// that infeasible designs can be reported rather than aborted.
struct Polytope {
  Eigen::MatrixXd H;
  Eigen::VectorXd b;
  bool empty = false;
  int determination_index = -1;  ///< horizon at which a recursive build stopped

  int rows() const { return static_cast<int>(H.rows()); }
  int dim() const { return static_cast<int>(H.cols()); }
};

/// Convert a box to halfspace form (two rows per coordinate).
Polytope box_to_polytope(const Box& box);

/// Membership test with absolute slack tolerance.  Empty sets contain nothing.
bool contains(const Polytope& p, const Eigen::VectorXd& x, double tol = 1e-9);

/// Per-row slack b - Hx (negative entries mark violated rows).
Eigen::VectorXd slack(const Polytope& p, const Eigen::VectorXd& x);

/// LP-certified emptiness test (Farkas certificate internally).
bool certify_empty(const Polytope& p);

/// Drop rows whose removal provably leaves the set unchanged.  Each removal
/// is certified by an LP; rows whose LP is unbounded are kept.  The result
/// describes the same set.
Polytope remove_redundant(const Polytope& p, double tol = 1e-9);

}  // namespace smpc
