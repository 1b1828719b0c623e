#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "smpc/polytope.hpp"

namespace smpc {

// ---------------------------------------------------------------------------
// Plant, disturbance and cost descriptions
// ---------------------------------------------------------------------------

/// Discrete-time plant x+ = A x + B u + D w with additive disturbance w.
struct LinearStochasticSystem {
  Eigen::MatrixXd A;  ///< n x n
  Eigen::MatrixXd B;  ///< n x m
  Eigen::MatrixXd D;  ///< n x q
};

enum class DisturbanceKind { UniformBox, TruncatedGaussian };

/// Zero-mean disturbance with compact support.  Uniform draws fill the box;
/// truncated Gaussian draws use `covariance` and reject samples outside the
/// box.  `covariance` always holds the second moment used in performance
/// bounds (exact for the uniform case, the parent covariance otherwise).
struct DisturbanceModel {
  DisturbanceKind kind = DisturbanceKind::UniformBox;
  Box box;                     ///< support (must contain the origin, symmetric)
  Eigen::MatrixXd covariance;  ///< q x q
};

/// Joint state/input constraints F x + G u <= 1 (row-wise, unit right-hand
/// side).  The first `num_state_rows` rows involve only the state and carry
/// the per-row satisfaction probabilities; the remaining rows are hard input
/// constraints (probability pinned to 1).
struct MixedConstraints {
  Eigen::MatrixXd F;            ///< rows x n
  Eigen::MatrixXd G;            ///< rows x m
  Eigen::VectorXd probability;  ///< rows, in (0, 1]
  int num_state_rows = 0;

  int rows() const { return static_cast<int>(F.rows()); }
};

/// One raw constraint row before normalization: row * v <= rhs.
struct RawConstraintRow {
  Eigen::VectorXd row;
  double rhs = 1.0;
  double probability = 1.0;  ///< ignored for input rows
};

/// Quadratic-plus-linear stage cost l(x,u) = x'Qx + q'x + u'Ru + r'u + c0.
/// The constant c0 only shifts reported averages; optimizers ignore it.
struct CostSpec {
  Eigen::MatrixXd Q;  ///< n x n, positive semidefinite
  Eigen::MatrixXd R;  ///< m x m, positive definite
  Eigen::VectorXd q;  ///< n
  Eigen::VectorXd r;  ///< m
  double constant = 0.0;
};

/// Everything derived from fixing the tube feedback u = K x + c.
struct ClosedLoopDesign {
  Eigen::MatrixXd K;        ///< m x n feedback gain (u = K x + c)
  Eigen::MatrixXd Phi;      ///< A + B K
  Eigen::MatrixXd F_tilde;  ///< F + G K, constraints along the closed loop
  /// Per-row satisfaction levels, aligned with F_tilde (1 = always).
  Eigen::VectorXd probabilities;
};

/// Terminal cost V_f(x) = x'P x + p'x compatible with the stage cost under
/// u = K x: V_f decreases exactly by the stage cost along the closed loop.
struct TerminalCost {
  Eigen::MatrixXd P;
  Eigen::VectorXd p;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Normalize user constraint rows to the unit-RHS form and stack state rows
/// above input rows.  Rows with non-positive RHS are rejected: the form
/// requires a strictly feasible origin.
MixedConstraints assemble_mixed_constraints(
    const std::vector<RawConstraintRow>& state_rows, int state_dim,
    const std::vector<RawConstraintRow>& input_rows, int input_dim);

/// Close the loop with gain K: Phi = A + BK, F_tilde = F + GK.  Requires
/// ρ(Phi) < 1.
ClosedLoopDesign closed_loop(const LinearStochasticSystem& sys,
                             const MixedConstraints& con,
                             const Eigen::MatrixXd& K);

/// Largest eigenvalue magnitude.
double spectral_radius(const Eigen::MatrixXd& M);

/// Infinite-horizon cost of running u = K x from x: solves the discrete
/// Lyapunov identities P = Phi'P Phi + Q + K'RK and p = Phi'p + q + K'r by
/// fixed-point iteration (relative tolerance 1e-12, capped at 1e5 sweeps).
/// The stage-cost constant is excluded (it would diverge); the result is the
/// cost-to-go of the deviation from the constant-rate baseline.
TerminalCost terminal_cost(const LinearStochasticSystem& sys,
                           const CostSpec& cost, const Eigen::MatrixXd& K);

/// Infinite-horizon LQR gain for (A, B, Q, R) via Riccati fixed-point
/// iteration; returns K with A + BK Schur stable.  Linear cost terms do not
/// influence the gain.
Eigen::MatrixXd lqr_gain(const LinearStochasticSystem& sys,
                         const CostSpec& cost);

/// Stage cost l(x, u).
double stage_cost(const CostSpec& cost, const Eigen::VectorXd& x,
                  const Eigen::VectorXd& u);

/// Finite-horizon cost of the input-offset sequence C = [c_0 ... c_{N-1}]
/// (m x N) started at x0: states follow x+ = Phi x + B c, inputs are
/// u = K x + c, and the terminal state is charged V_f.
double ocp_cost(const LinearStochasticSystem& sys, const CostSpec& cost,
                const Eigen::MatrixXd& K, const TerminalCost& vf,
                const Eigen::VectorXd& x0, const Eigen::MatrixXd& C);

}  // namespace smpc
