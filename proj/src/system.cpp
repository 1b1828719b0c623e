#include "smpc/system.hpp"

#include <cmath>
#include <sstream>

#include "smpc/errors.hpp"

namespace smpc {
namespace {

void check_square(const Eigen::MatrixXd& M, const char* name) {
  if (M.rows() != M.cols()) {
    std::ostringstream msg;
    msg << name << " must be square, got " << M.rows() << "x" << M.cols();
    throw ConfigError(msg.str());
  }
}

}  // namespace

MixedConstraints assemble_mixed_constraints(
    const std::vector<RawConstraintRow>& state_rows, int state_dim,
    const std::vector<RawConstraintRow>& input_rows, int input_dim) {
  const int rows = static_cast<int>(state_rows.size() + input_rows.size());
  MixedConstraints con;
  con.F = Eigen::MatrixXd::Zero(rows, state_dim);
  con.G = Eigen::MatrixXd::Zero(rows, input_dim);
  con.probability = Eigen::VectorXd::Ones(rows);
  con.num_state_rows = static_cast<int>(state_rows.size());

  auto normalize = [](const RawConstraintRow& raw, int expected_dim,
                      const char* which, int index) {
    if (raw.row.size() != expected_dim) {
      std::ostringstream msg;
      msg << which << " constraint " << index << " has " << raw.row.size()
          << " coefficients, expected " << expected_dim;
      throw ConfigError(msg.str());
    }
    if (!(raw.rhs > 0.0)) {
      std::ostringstream msg;
      msg << which << " constraint " << index << " has right-hand side "
          << raw.rhs << "; rows must be written with a positive bound so the "
          << "origin is strictly feasible";
      throw ConfigError(msg.str());
    }
    return (raw.row / raw.rhs).eval();
  };

  for (int i = 0; i < con.num_state_rows; ++i) {
    const RawConstraintRow& raw = state_rows[i];
    con.F.row(i) = normalize(raw, state_dim, "state", i).transpose();
    if (!(raw.probability > 0.0 && raw.probability <= 1.0)) {
      std::ostringstream msg;
      msg << "state constraint " << i << " has probability level "
          << raw.probability << ", expected a value in (0, 1]";
      throw ConfigError(msg.str());
    }
    con.probability(i) = raw.probability;
  }
  for (size_t i = 0; i < input_rows.size(); ++i) {
    const int at = con.num_state_rows + static_cast<int>(i);
    con.G.row(at) =
        normalize(input_rows[i], input_dim, "input", static_cast<int>(i))
            .transpose();
    con.probability(at) = 1.0;  // hard input constraints
  }
  return con;
}

ClosedLoopDesign closed_loop(const LinearStochasticSystem& sys,
                             const MixedConstraints& con,
                             const Eigen::MatrixXd& K) {
  if (K.rows() != sys.B.cols() || K.cols() != sys.A.rows()) {
    std::ostringstream msg;
    msg << "closed_loop: K is " << K.rows() << "x" << K.cols()
        << ", expected " << sys.B.cols() << "x" << sys.A.rows();
    throw ConfigError(msg.str());
  }
  ClosedLoopDesign cl;
  cl.K = K;
  cl.Phi = sys.A + sys.B * K;
  cl.F_tilde = con.F + con.G * K;
  cl.probabilities = con.probability;
  const double rho = spectral_radius(cl.Phi);
  if (rho >= 1.0) {
    std::ostringstream msg;
    msg << "closed_loop: A + BK has spectral radius " << rho
        << "; the tube feedback must be stabilizing";
    throw DesignError(msg.str());
  }
  return cl;
}

double spectral_radius(const Eigen::MatrixXd& M) {
  check_square(M, "spectral_radius: matrix");
  if (M.rows() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(M, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) {
    throw NumericalError("spectral_radius: eigenvalue iteration failed");
  }
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

TerminalCost terminal_cost(const LinearStochasticSystem& sys,
                           const CostSpec& cost, const Eigen::MatrixXd& K) {
  const int n = static_cast<int>(sys.A.rows());
  const Eigen::MatrixXd Phi = sys.A + sys.B * K;
  const double rho = spectral_radius(Phi);
  if (rho >= 1.0) {
    std::ostringstream msg;
    msg << "terminal_cost: closed loop has spectral radius " << rho
        << " >= 1, the infinite-horizon cost diverges";
    throw DesignError(msg.str());
  }

  const Eigen::MatrixXd W = cost.Q + K.transpose() * cost.R * K;
  const Eigen::VectorXd w = cost.q + K.transpose() * cost.r;

  constexpr double kRelTol = 1e-12;
  constexpr long kMaxSweeps = 100000;

  // P <- Phi'P Phi + W converges geometrically at rate rho^2.
  Eigen::MatrixXd P = W;
  for (long it = 0;; ++it) {
    Eigen::MatrixXd next = Phi.transpose() * P * Phi + W;
    const double delta = (next - P).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, next.cwiseAbs().maxCoeff());
    P = std::move(next);
    if (delta <= kRelTol * scale) break;
    if (it >= kMaxSweeps) {
      throw NumericalError("terminal_cost: quadratic term did not converge");
    }
  }
  P = 0.5 * (P + P.transpose()).eval();  // enforce exact symmetry

  // p <- Phi'p + w converges at rate rho to the fixed point of
  // p = Phi'p + q + K'r (linear part of the cost-to-go).
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
  for (long it = 0;; ++it) {
    Eigen::VectorXd next = Phi.transpose() * p + w;
    const double delta = (next - p).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, next.cwiseAbs().maxCoeff());
    p = std::move(next);
    if (delta <= kRelTol * scale) break;
    if (it >= kMaxSweeps) {
      throw NumericalError("terminal_cost: linear term did not converge");
    }
  }
  return {P, p};
}

Eigen::MatrixXd lqr_gain(const LinearStochasticSystem& sys,
                         const CostSpec& cost) {
  check_square(sys.A, "lqr_gain: A");
  const Eigen::MatrixXd& A = sys.A;
  const Eigen::MatrixXd& B = sys.B;

  constexpr double kRelTol = 1e-12;
  constexpr long kMaxSweeps = 100000;

  Eigen::MatrixXd P = cost.Q;
  for (long it = 0;; ++it) {
    const Eigen::MatrixXd BtP = B.transpose() * P;
    const Eigen::MatrixXd S = cost.R + BtP * B;
    const Eigen::MatrixXd K = -S.ldlt().solve(BtP * A);
    Eigen::MatrixXd next =
        cost.Q + A.transpose() * P * (A + B * K);  // Joseph-lite update
    next = 0.5 * (next + next.transpose()).eval();
    const double delta = (next - P).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, next.cwiseAbs().maxCoeff());
    P = std::move(next);
    if (delta <= kRelTol * scale) {
      const Eigen::MatrixXd BtPf = B.transpose() * P;
      const Eigen::MatrixXd Sf = cost.R + BtPf * B;
      Eigen::MatrixXd K = -Sf.ldlt().solve(BtPf * A);
      const double rho = spectral_radius(A + B * K);
      if (rho >= 1.0) {
        std::ostringstream msg;
        msg << "lqr_gain: converged gain is not stabilizing (spectral radius "
            << rho << "); check stabilizability/detectability";
        throw DesignError(msg.str());
      }
      return K;
    }
    if (it >= kMaxSweeps) {
      throw NumericalError(
          "lqr_gain: Riccati iteration did not converge; the pair (A, B) may "
          "not be stabilizable");
    }
  }
}

double stage_cost(const CostSpec& cost, const Eigen::VectorXd& x,
                  const Eigen::VectorXd& u) {
  double v = cost.constant;
  v += x.dot(cost.Q * x) + cost.q.dot(x);
  v += u.dot(cost.R * u) + cost.r.dot(u);
  return v;
}

double ocp_cost(const LinearStochasticSystem& sys, const CostSpec& cost,
                const Eigen::MatrixXd& K, const TerminalCost& vf,
                const Eigen::VectorXd& x0, const Eigen::MatrixXd& C) {
  const Eigen::MatrixXd Phi = sys.A + sys.B * K;
  const int N = static_cast<int>(C.cols());
  Eigen::VectorXd x = x0;
  double total = 0.0;
  for (int i = 0; i < N; ++i) {
    const Eigen::VectorXd u = K * x + C.col(i);
    total += stage_cost(cost, x, u);
    x = (Phi * x + sys.B * C.col(i)).eval();
  }
  total += x.dot(vf.P * x) + vf.p.dot(x);
  return total;
}

}  // namespace smpc
