#include "smpc/polytope.hpp"

#include <sstream>
#include <vector>

#include "smpc/errors.hpp"
#include "smpc/lp.hpp"

namespace smpc {

Polytope box_to_polytope(const Box& box) {
  const int q = static_cast<int>(box.lower.size());
  if (box.upper.size() != q) {
    throw ConfigError("box: lower and upper bounds differ in length");
  }
  Polytope p;
  p.H = Eigen::MatrixXd::Zero(2 * q, q);
  p.b.resize(2 * q);
  for (int i = 0; i < q; ++i) {
    if (box.lower(i) > box.upper(i)) {
      std::ostringstream msg;
      msg << "box: lower bound " << box.lower(i) << " exceeds upper bound "
          << box.upper(i) << " in coordinate " << i;
      throw ConfigError(msg.str());
    }
    p.H(2 * i, i) = 1.0;
    p.b(2 * i) = box.upper(i);
    p.H(2 * i + 1, i) = -1.0;
    p.b(2 * i + 1) = -box.lower(i);
  }
  return p;
}

bool contains(const Polytope& p, const Eigen::VectorXd& x, double tol) {
  if (p.empty) return false;
  if (x.size() != p.dim()) {
    throw ConfigError("polytope: point dimension mismatch");
  }
  if (p.rows() == 0) return true;
  return ((p.b - p.H * x).array() >= -tol).all();
}

Eigen::VectorXd slack(const Polytope& p, const Eigen::VectorXd& x) {
  if (x.size() != p.dim()) {
    throw ConfigError("polytope: point dimension mismatch");
  }
  return p.b - p.H * x;
}

bool certify_empty(const Polytope& p) {
  if (p.rows() == 0) return false;
  return halfspaces_empty(p.H, p.b);
}

Polytope remove_redundant(const Polytope& p, double tol) {
  if (p.empty || p.rows() <= 1) return p;

  std::vector<bool> keep(p.rows(), true);
  int kept = p.rows();
  for (int j = 0; j < p.rows(); ++j) {
    if (kept <= 1) break;
    // Build the system without row j (and without already-dropped rows).
    Eigen::MatrixXd A(kept - 1, p.dim());
    Eigen::VectorXd b(kept - 1);
    int at = 0;
    for (int i = 0; i < p.rows(); ++i) {
      if (i == j || !keep[i]) continue;
      A.row(at) = p.H.row(i);
      b(at) = p.b(i);
      ++at;
    }
    LpResult lp = maximize_linear(p.H.row(j).transpose(), A, b);
    if (lp.status == LpStatus::Optimal && lp.value <= p.b(j) + tol) {
      keep[j] = false;
      --kept;
    }
    // Unbounded: row j genuinely cuts the set, keep it.  Infeasible cannot
    // occur here for non-empty inputs, but keeping the row is safe either way.
  }

  Polytope out;
  out.H.resize(kept, p.dim());
  out.b.resize(kept);
  int at = 0;
  for (int i = 0; i < p.rows(); ++i) {
    if (!keep[i]) continue;
    out.H.row(at) = p.H.row(i);
    out.b(at) = p.b(i);
    ++at;
  }
  out.empty = p.empty;
  out.determination_index = p.determination_index;
  return out;
}

}  // namespace smpc
