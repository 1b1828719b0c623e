#include "smpc/lp.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "smpc/errors.hpp"

namespace smpc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Equality-form program: minimize g'y subject to W y = d, y >= 0.  The row
// count of W is tiny (the dimension of the original free variable), so the
// basis is refactorized from scratch every pivot.
struct EqualityForm {
  Eigen::MatrixXd W;  // n_rows x n_cols
  Eigen::VectorXd g;  // n_cols
  Eigen::VectorXd d;  // n_rows
};

struct SimplexOutcome {
  enum class Kind { Optimal, Infeasible, Unbounded } kind;
  Eigen::VectorXd y;           // primal point of the equality form
  Eigen::VectorXd multiplier;  // pi with reduced costs g - W'pi >= 0 at optimum
  Eigen::VectorXd ray;         // improving ray when unbounded (W ray = 0, ray >= 0)
  double value = 0.0;
  std::vector<int> basis;      // final basis column indices
};

// Revised primal simplex with Bland's rule from a given feasible basis.
// `basis` holds column indices, one per row of W.  `allowed` masks columns
// that may enter (used to keep phase-1 artificials out during phase 2).
SimplexOutcome run_simplex(const EqualityForm& p, std::vector<int> basis,
                           const std::vector<bool>& allowed, double tol) {
  const int n_rows = static_cast<int>(p.W.rows());
  const int n_cols = static_cast<int>(p.W.cols());
  const long max_iter = 200L + 10L * (n_rows + n_cols);

  Eigen::MatrixXd B(n_rows, n_rows);
  Eigen::VectorXd y_basic(n_rows), g_basic(n_rows);

  for (long iter = 0; iter < max_iter; ++iter) {
    for (int i = 0; i < n_rows; ++i) {
      B.col(i) = p.W.col(basis[i]);
      g_basic(i) = p.g(basis[i]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
    if (!lu.isInvertible()) {
      throw NumericalError("lp: singular simplex basis");
    }
    y_basic = lu.solve(p.d);
    Eigen::VectorXd pi = lu.transpose().solve(g_basic);

    // Bland: entering column = smallest index with negative reduced cost.
    int entering = -1;
    for (int j = 0; j < n_cols; ++j) {
      if (!allowed[j]) continue;
      bool basic = false;
      for (int i = 0; i < n_rows; ++i) {
        if (basis[i] == j) { basic = true; break; }
      }
      if (basic) continue;
      const double reduced = p.g(j) - pi.dot(p.W.col(j));
      if (reduced < -tol) { entering = j; break; }
    }
    if (entering < 0) {
      SimplexOutcome out;
      out.kind = SimplexOutcome::Kind::Optimal;
      out.y = Eigen::VectorXd::Zero(n_cols);
      for (int i = 0; i < n_rows; ++i) out.y(basis[i]) = y_basic(i);
      out.multiplier = pi;
      out.value = p.g.dot(out.y);
      out.basis = basis;
      return out;
    }

    const Eigen::VectorXd direction = lu.solve(p.W.col(entering));

    // Ratio test (Bland tie-break on the smallest basis column index).
    int leaving = -1;
    double best_ratio = kInf;
    for (int i = 0; i < n_rows; ++i) {
      if (direction(i) > tol) {
        const double ratio = std::max(y_basic(i), 0.0) / direction(i);
        if (ratio < best_ratio - tol ||
            (ratio < best_ratio + tol &&
             (leaving < 0 || basis[i] < basis[leaving]))) {
          best_ratio = ratio;
          leaving = i;
        }
      }
    }
    if (leaving < 0) {
      // Unbounded: moving along the ray keeps feasibility forever.
      SimplexOutcome out;
      out.kind = SimplexOutcome::Kind::Unbounded;
      out.ray = Eigen::VectorXd::Zero(n_cols);
      out.ray(entering) = 1.0;
      for (int i = 0; i < n_rows; ++i) out.ray(basis[i]) = -direction(i);
      out.ray = out.ray.cwiseMax(0.0);  // clip ratio-test noise
      out.y = Eigen::VectorXd::Zero(n_cols);
      for (int i = 0; i < n_rows; ++i) out.y(basis[i]) = std::max(y_basic(i), 0.0);
      out.basis = basis;
      return out;
    }
    basis[leaving] = entering;
  }
  throw NumericalError("lp: simplex iteration cap exceeded");
}

// Phase 1: find a feasible basis of W y = d, y >= 0, or report that none
// exists.  Artificial columns with +/-1 entries make the start basis trivial.
struct Phase1Result {
  bool feasible;
  std::vector<int> basis;  // indices into the original columns when feasible
};

Phase1Result phase1(const EqualityForm& p, double tol) {
  const int n_rows = static_cast<int>(p.W.rows());
  const int n_cols = static_cast<int>(p.W.cols());

  EqualityForm aux;
  aux.W.resize(n_rows, n_cols + n_rows);
  aux.W.leftCols(n_cols) = p.W;
  aux.W.rightCols(n_rows).setZero();
  for (int i = 0; i < n_rows; ++i) {
    aux.W(i, n_cols + i) = (p.d(i) >= 0.0) ? 1.0 : -1.0;
  }
  aux.g = Eigen::VectorXd::Zero(n_cols + n_rows);
  aux.g.tail(n_rows).setOnes();
  aux.d = p.d;

  std::vector<int> basis(n_rows);
  for (int i = 0; i < n_rows; ++i) basis[i] = n_cols + i;
  std::vector<bool> allowed(n_cols + n_rows, true);

  SimplexOutcome out = run_simplex(aux, basis, allowed, tol);
  // The auxiliary objective is bounded below by zero, so Unbounded is
  // impossible; only the optimal value matters.
  const double scale = 1.0 + p.d.cwiseAbs().maxCoeff();
  if (out.kind != SimplexOutcome::Kind::Optimal || out.value > tol * scale * 10) {
    return {false, {}};
  }
  // Artificials may linger in the basis at level zero (redundant rows); they
  // are barred from re-entering in phase 2, which keeps them harmless.
  return {true, out.basis};
}

// Solve the equality form to optimality from scratch (phase 1 + phase 2).
SimplexOutcome solve_equality_form(const EqualityForm& p, double tol) {
  Phase1Result ph1 = phase1(p, tol);
  if (!ph1.feasible) {
    SimplexOutcome out;
    out.kind = SimplexOutcome::Kind::Infeasible;
    return out;
  }
  const int n_rows = static_cast<int>(p.W.rows());
  const int n_cols = static_cast<int>(p.W.cols());

  // Phase 2 operates on W extended by the artificial columns that may still
  // sit in the basis (at level zero) for redundant rows; they are barred
  // from entering.
  EqualityForm ext;
  ext.W.resize(n_rows, n_cols + n_rows);
  ext.W.leftCols(n_cols) = p.W;
  ext.W.rightCols(n_rows).setZero();
  for (int i = 0; i < n_rows; ++i) {
    ext.W(i, n_cols + i) = (p.d(i) >= 0.0) ? 1.0 : -1.0;
  }
  ext.g = Eigen::VectorXd::Zero(n_cols + n_rows);
  ext.g.head(n_cols) = p.g;
  ext.d = p.d;
  std::vector<bool> allowed(n_cols + n_rows, false);
  for (int j = 0; j < n_cols; ++j) allowed[j] = true;

  SimplexOutcome out = run_simplex(ext, ph1.basis, allowed, tol);
  if (out.kind != SimplexOutcome::Kind::Infeasible) {
    out.y.conservativeResize(n_cols);
    if (out.ray.size() > 0) out.ray.conservativeResize(n_cols);
  }
  return out;
}

double problem_scale(const Eigen::VectorXd& c, const Eigen::MatrixXd& A,
                     const Eigen::VectorXd& b) {
  double s = 1.0;
  if (c.size() > 0) s = std::max(s, c.cwiseAbs().maxCoeff());
  if (A.size() > 0) s = std::max(s, A.cwiseAbs().maxCoeff());
  if (b.size() > 0) s = std::max(s, b.cwiseAbs().maxCoeff());
  return s;
}

}  // namespace

LpResult maximize_linear(const Eigen::VectorXd& c, const Eigen::MatrixXd& A,
                         const Eigen::VectorXd& b) {
  if (A.rows() != b.size() || A.cols() != c.size()) {
    std::ostringstream msg;
    msg << "lp: shape mismatch, A is " << A.rows() << "x" << A.cols()
        << ", b has " << b.size() << " entries, c has " << c.size();
    throw ConfigError(msg.str());
  }
  const double tol = 1e-11 * problem_scale(c, A, b);

  // Dual of max{c'x : Ax <= b}: minimize b'y subject to A'y = c, y >= 0.
  EqualityForm dual;
  dual.W = A.transpose();
  dual.g = b;
  dual.d = c;

  SimplexOutcome out = solve_equality_form(dual, tol);
  LpResult res;
  switch (out.kind) {
    case SimplexOutcome::Kind::Optimal:
      // Simplex multipliers of the dual are the primal maximizer.
      res.status = LpStatus::Optimal;
      res.x = out.multiplier;
      res.value = c.dot(res.x);
      return res;
    case SimplexOutcome::Kind::Unbounded:
      // The dual ray r satisfies A'r = 0, r >= 0, b'r < 0: a Farkas
      // certificate that the primal feasible set is empty.
      res.status = LpStatus::Infeasible;
      res.farkas = out.ray;
      return res;
    case SimplexOutcome::Kind::Infeasible:
      // Dual infeasible: the primal is unbounded if it is feasible at all.
      if (halfspaces_empty(A, b, &res.farkas)) {
        res.status = LpStatus::Infeasible;
      } else {
        res.status = LpStatus::Unbounded;
      }
      return res;
  }
  throw NumericalError("lp: unreachable");
}

bool halfspaces_empty(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                      Eigen::VectorXd* certificate) {
  if (A.rows() == 0) return false;
  if (A.rows() != b.size()) {
    throw ConfigError("lp: A and b row counts differ");
  }
  const int n = static_cast<int>(A.cols());
  const int m = static_cast<int>(A.rows());
  const double tol = 1e-11 * problem_scale(Eigen::VectorXd::Zero(n), A, b);

  // Farkas: the set is empty iff some y >= 0 has A'y = 0, b'y < 0.  The
  // normalization sum(y) = 1 keeps the search bounded.
  EqualityForm lp;
  lp.W.resize(n + 1, m);
  lp.W.topRows(n) = A.transpose();
  lp.W.bottomRows(1).setOnes();
  lp.g = b;
  lp.d = Eigen::VectorXd::Zero(n + 1);
  lp.d(n) = 1.0;

  SimplexOutcome out = solve_equality_form(lp, tol);
  if (out.kind == SimplexOutcome::Kind::Infeasible) {
    // No normalized combination at all (e.g. a single halfspace): nonempty.
    return false;
  }
  double best = (out.kind == SimplexOutcome::Kind::Optimal)
                    ? out.value
                    : -kInf;  // unbounded descent => arbitrarily negative
  const double scale = 1.0 + b.cwiseAbs().maxCoeff();
  if (best < -10 * tol * scale) {
    if (certificate != nullptr) {
      *certificate = (out.kind == SimplexOutcome::Kind::Optimal) ? out.y : out.ray;
    }
    return true;
  }
  return false;
}

}  // namespace smpc
