#include "smpc/qp.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "smpc/errors.hpp"

namespace smpc {
namespace detail {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

DualActiveSetSolver::DualActiveSetSolver(const Eigen::MatrixXd& H)
    : n_(static_cast<int>(H.rows())), H_(0.5 * (H + H.transpose())) {
  if (H.rows() != H.cols()) {
    throw ConfigError("qp: Hessian must be square");
  }
  llt_.compute(H_);
  if (llt_.info() != Eigen::Success) {
    throw NumericalError("qp: Hessian is not positive definite");
  }
  // j0 = L^{-T}: columns span the whole space in H-conjugate coordinates.
  j0_ = llt_.matrixL()
            .transpose()
            .solve(Eigen::MatrixXd::Identity(n_, n_));
  J_.resize(n_, n_);
  R_.resize(n_, n_);
  d_.resize(n_);
  zstep_.resize(n_);
  rstep_.resize(n_);
  u_.resize(n_);
  active_.reserve(n_);
}

QpSolution DualActiveSetSolver::solve(const Eigen::VectorXd& f,
                                      const Eigen::MatrixXd& A_eq,
                                      const Eigen::VectorXd& b_eq,
                                      const Eigen::MatrixXd& G,
                                      const Eigen::VectorXd& h) {
  const int meq = static_cast<int>(A_eq.rows());
  const int mi = static_cast<int>(G.rows());
  const long max_iter = 50L + 10L * (meq + mi + n_);

  double scale = 1.0 + f.cwiseAbs().maxCoeff();
  if (h.size() > 0) scale = std::max(scale, h.cwiseAbs().maxCoeff());
  if (b_eq.size() > 0) scale = std::max(scale, b_eq.cwiseAbs().maxCoeff());
  const double tol = 1e-11 * scale;

  QpSolution sol;
  sol.lambda = Eigen::VectorXd::Zero(mi);
  sol.mu = Eigen::VectorXd::Zero(meq);

  // Unconstrained minimum.
  Eigen::VectorXd z = -llt_.solve(f);
  J_ = j0_;
  int q = 0;  // active-set size
  active_.clear();
  std::vector<double> eq_sign(meq, 1.0);  // orientation chosen when added

  // Internal constraint view: id < meq is an equality, else inequality
  // id - meq.  Normal/level in ">= form" (slack = v'z - e >= 0).
  auto normal_of = [&](int id, double sign) -> Eigen::VectorXd {
    if (id < meq) return sign * A_eq.row(id).transpose();
    return -G.row(id - meq).transpose();
  };
  auto level_of = [&](int id, double sign) -> double {
    if (id < meq) return sign * b_eq(id);
    return -h(id - meq);
  };

  int iterations = 0;
  int pending = 0;  // next equality to enforce

  while (true) {
    if (++iterations > max_iter) {
      throw NumericalError("qp: active-set iteration cap exceeded");
    }

    // Pick the constraint to enforce: equalities first (in order), then the
    // most violated inequality.
    int chosen = -1;
    double chosen_sign = 1.0;
    double chosen_slack = 0.0;
    if (pending < meq) {
      chosen = pending;
      const double s = A_eq.row(chosen).dot(z) - b_eq(chosen);
      chosen_sign = (s > 0.0) ? -1.0 : 1.0;  // flip so the slack is <= 0
      chosen_slack = -std::abs(s);
      if (chosen_slack >= -tol) {
        // Already satisfied; still add it to pin the multiplier unless the
        // row is dependent (then skip it entirely: consistent and redundant).
        d_.noalias() = J_.transpose() * normal_of(chosen, chosen_sign);
        const double tail = (q < n_) ? d_.tail(n_ - q).norm() : 0.0;
        if (tail <= 1e-12 * (1.0 + d_.norm())) {
          eq_sign[chosen] = chosen_sign;
          ++pending;
          --iterations;
          continue;
        }
      }
    } else {
      double worst = -tol;
      for (int j = 0; j < mi; ++j) {
        const double s = h(j) - G.row(j).dot(z);
        if (s < worst) {
          worst = s;
          chosen = meq + j;
        }
      }
      if (chosen < 0) break;  // all satisfied: optimal
      chosen_slack = worst;
    }

    const Eigen::VectorXd np = normal_of(chosen, chosen_sign);
    const double ep = level_of(chosen, chosen_sign);
    double u_plus = 0.0;  // multiplier of the incoming constraint

    // Inner loop: take primal/dual steps until `chosen` becomes active or
    // infeasibility is proven.
    while (true) {
      if (++iterations > max_iter) {
        throw NumericalError("qp: active-set iteration cap exceeded");
      }
      d_.noalias() = J_.transpose() * np;
      // Primal step direction (component of np outside the active span).
      zstep_.setZero();
      if (q < n_) {
        zstep_.noalias() = J_.rightCols(n_ - q) * d_.tail(n_ - q);
      }
      // Dual step direction.
      if (q > 0) {
        rstep_.head(q) = R_.topLeftCorner(q, q)
                             .triangularView<Eigen::Upper>()
                             .solve(d_.head(q));
      }

      const double step_dot = zstep_.dot(np);
      const bool has_primal = step_dot > tol * (1.0 + np.norm());

      // Longest dual step keeping multipliers of active inequalities >= 0.
      double t1 = kInf;
      int blocking = -1;
      for (int k = 0; k < q; ++k) {
        if (active_[k] < meq) continue;  // equalities never leave
        if (rstep_(k) > tol) {
          const double ratio = u_(k) / rstep_(k);
          if (ratio < t1) {
            t1 = ratio;
            blocking = k;
          }
        }
      }
      const double slack_now = np.dot(z) - ep;
      const double t2 = has_primal ? (-slack_now / step_dot) : kInf;
      const double t = std::min(t1, t2);

      if (t >= kInf) {
        // No way to satisfy `chosen`: infeasible constraint system.  The
        // certificate satisfies G'lambda + A_eq'nu = 0 with lambda >= 0 and
        // h'lambda + b_eq'nu < 0.
        sol.status = QpStatus::Infeasible;
        sol.farkas_ineq = Eigen::VectorXd::Zero(mi);
        sol.farkas_eq = Eigen::VectorXd::Zero(meq);
        auto contribute = [&](int id, double sign, double coeff) {
          if (id < meq) {
            sol.farkas_eq(id) -= coeff * sign;  // nu = -mu
          } else {
            sol.farkas_ineq(id - meq) += coeff;
          }
        };
        contribute(chosen, chosen_sign, 1.0);
        for (int k = 0; k < q; ++k) {
          const int id = active_[k];
          contribute(id, id < meq ? eq_sign[id] : 1.0, -rstep_(k));
        }
        sol.iterations = iterations;
        return sol;
      }

      // Dual update.
      if (q > 0) u_.head(q) -= t * rstep_.head(q);
      u_plus += t;

      if (t == t2) {
        // Full step: constraint reached, add it to the active set.
        z += t * zstep_;
        // Givens rotations zero d below row q so R stays triangular.
        for (int i = n_ - 1; i > q; --i) {
          double a = d_(i - 1), b = d_(i);
          if (std::abs(b) < 1e-300) continue;
          const double r = std::hypot(a, b);
          const double cs = a / r, sn = b / r;
          d_(i - 1) = r;
          d_(i) = 0.0;
          // Apply to J from the right on columns (i-1, i).
          for (int row = 0; row < n_; ++row) {
            const double t1v = J_(row, i - 1), t2v = J_(row, i);
            J_(row, i - 1) = cs * t1v + sn * t2v;
            J_(row, i) = -sn * t1v + cs * t2v;
          }
        }
        R_.col(q).head(q + 1) = d_.head(q + 1);
        active_.push_back(chosen);
        u_(q) = u_plus;
        ++q;
        if (chosen < meq) {
          eq_sign[chosen] = chosen_sign;
          ++pending;
        }
        break;  // back to constraint selection
      }

      // Partial step (t1 < t2): drop the blocking constraint, keep pushing.
      if (has_primal) z += t * zstep_;
      // Remove column `blocking` from R (shift left + re-triangularize).
      for (int col = blocking; col < q - 1; ++col) {
        R_.col(col).head(q) = R_.col(col + 1).head(q);
        u_(col) = u_(col + 1);
        active_[col] = active_[col + 1];
      }
      active_.pop_back();
      --q;
      for (int i = blocking; i < q; ++i) {
        // Zero the subdiagonal entry R(i+1, i) introduced by the shift.
        double a = R_(i, i), b = R_(i + 1, i);
        if (std::abs(b) < 1e-300) continue;
        const double r = std::hypot(a, b);
        const double cs = a / r, sn = b / r;
        for (int col = i; col < q; ++col) {
          const double t1v = R_(i, col), t2v = R_(i + 1, col);
          R_(i, col) = cs * t1v + sn * t2v;
          R_(i + 1, col) = -sn * t1v + cs * t2v;
        }
        for (int row = 0; row < n_; ++row) {
          const double t1v = J_(row, i), t2v = J_(row, i + 1);
          J_(row, i) = cs * t1v + sn * t2v;
          J_(row, i + 1) = -sn * t1v + cs * t2v;
        }
      }
    }
  }

  sol.status = QpStatus::Optimal;
  sol.z = z;
  for (int k = 0; k < q; ++k) {
    if (active_[k] < meq) {
      // Internal multiplier refers to the sign-flipped row.
      sol.mu(active_[k]) = -eq_sign[active_[k]] * u_(k);
    } else {
      sol.lambda(active_[k] - meq) = u_(k);
      sol.active_set.push_back(active_[k] - meq);
    }
  }
  sol.objective = 0.5 * z.dot(H_ * z) + f.dot(z);
  sol.iterations = iterations;

  // KKT residual: stationarity, primal feasibility, complementarity.
  Eigen::VectorXd grad = H_ * z + f;
  if (mi > 0) grad.noalias() += G.transpose() * sol.lambda;
  if (meq > 0) grad.noalias() += A_eq.transpose() * sol.mu;
  double res = grad.cwiseAbs().maxCoeff();
  if (mi > 0) {
    const Eigen::VectorXd s = G * z - h;
    res = std::max(res, s.maxCoeff());
    res = std::max(res, (sol.lambda.array() * s.array()).abs().maxCoeff());
  }
  if (meq > 0) {
    res = std::max(res, (A_eq * z - b_eq).cwiseAbs().maxCoeff());
  }
  sol.kkt_residual = res;
  return sol;
}

}  // namespace detail

namespace {

// Mu sign note: with Lagrangian 0.5 z'Hz + f'z + lambda'(Gz-h) + mu'(Az-b),
// stationarity reads Hz + f + G'lambda + A'mu = 0 with lambda >= 0.

QpSolution solve_definite(const QpProblem& p) {
  detail::DualActiveSetSolver solver(p.H);
  return solver.solve(p.f, p.A_eq, p.b_eq, p.G, p.h);
}

double psd_check_shift(const Eigen::MatrixXd& H) {
  // Returns 0 when H is PSD within tolerance; throws otherwise.  Uses an
  // LDL^T attempt followed by an eigenvalue bound only on failure.
  Eigen::MatrixXd Hs = 0.5 * (H + H.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Hs,
                                                    Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double sc = std::max(1.0, Hs.cwiseAbs().maxCoeff());
  if (lo < -1e-10 * sc) {
    std::ostringstream msg;
    msg << "qp: Hessian is not positive semidefinite (lowest eigenvalue "
        << lo << ")";
    throw ConfigError(msg.str());
  }
  return std::max(0.0, -lo);
}

QpSolution kkt_residual_original(const QpProblem& p, QpSolution sol) {
  Eigen::VectorXd grad = 0.5 * (p.H + p.H.transpose()) * sol.z + p.f;
  if (p.G.rows() > 0) grad.noalias() += p.G.transpose() * sol.lambda;
  if (p.A_eq.rows() > 0) grad.noalias() += p.A_eq.transpose() * sol.mu;
  double res = grad.cwiseAbs().maxCoeff();
  if (p.G.rows() > 0) {
    const Eigen::VectorXd s = p.G * sol.z - p.h;
    res = std::max(res, s.maxCoeff());
    res = std::max(res, (sol.lambda.array() * s.array()).abs().maxCoeff());
  }
  if (p.A_eq.rows() > 0) {
    res = std::max(res, (p.A_eq * sol.z - p.b_eq).cwiseAbs().maxCoeff());
  }
  sol.kkt_residual = res;
  sol.objective = 0.5 * sol.z.dot(p.H * sol.z) + p.f.dot(sol.z);
  return sol;
}

// Proximal-point outer loop for PSD-singular Hessians (LPs included): solve
// min 0.5 z'(H+eps I)z + (f - eps z_prev)'z repeatedly; the fixed point is a
// solution of the original problem.
QpSolution solve_semidefinite(const QpProblem& p) {
  const int n = static_cast<int>(p.H.rows());
  const double hscale = std::max(1.0, p.H.cwiseAbs().maxCoeff());
  const double eps = 1e-7 * hscale;
  Eigen::MatrixXd Hreg =
      0.5 * (p.H + p.H.transpose()) +
      eps * Eigen::MatrixXd::Identity(n, n);
  detail::DualActiveSetSolver solver(Hreg);

  // A step direction u with Hu = 0, f'u < 0, Gu <= 0 and A_eq u = 0 is a
  // recession ray of the original problem: objective unbounded below.
  const auto is_recession_ray = [&p, hscale](const Eigen::VectorXd& d) {
    const double nd = d.cwiseAbs().maxCoeff();
    if (nd <= 1e-6) return false;
    const Eigen::VectorXd u = d / nd;
    if ((p.H * u).cwiseAbs().maxCoeff() > 1e-9 * hscale) return false;
    const double fscale = std::max(1.0, p.f.cwiseAbs().maxCoeff());
    if (p.f.dot(u) >= -1e-11 * fscale) return false;
    for (int j = 0; j < p.G.rows(); ++j) {
      const double row_scale = std::max(1.0, p.G.row(j).cwiseAbs().maxCoeff());
      if (p.G.row(j).dot(u) > 1e-9 * row_scale) return false;
    }
    if (p.A_eq.rows() > 0 &&
        (p.A_eq * u).cwiseAbs().maxCoeff() > 1e-9) return false;
    return true;
  };

  Eigen::VectorXd z_prev = Eigen::VectorXd::Zero(n);
  QpSolution sol;
  constexpr int kMaxOuter = 200;
  for (int outer = 0; outer < kMaxOuter; ++outer) {
    const Eigen::VectorXd f_shift = p.f - eps * z_prev;
    sol = solver.solve(f_shift, p.A_eq, p.b_eq, p.G, p.h);
    if (sol.status != QpStatus::Optimal) return sol;
    if (sol.z.cwiseAbs().maxCoeff() > 1e12 || is_recession_ray(sol.z - z_prev)) {
      sol.status = QpStatus::Unbounded;
      return sol;
    }
    const double move = (sol.z - z_prev).cwiseAbs().maxCoeff();
    z_prev = sol.z;
    if (move <= 1e-11 * (1.0 + z_prev.cwiseAbs().maxCoeff())) {
      sol = kkt_residual_original(p, std::move(sol));
      if (sol.kkt_residual <= 1e-8) return sol;
    }
  }
  sol = kkt_residual_original(p, std::move(sol));
  if (sol.kkt_residual <= 1e-8) return sol;
  throw NumericalError(
      "qp: proximal iteration on a semidefinite Hessian did not converge");
}

}  // namespace

QpSolution solve_qp(const QpProblem& problem) {
  const int n = static_cast<int>(problem.H.rows());
  if (problem.H.cols() != n || problem.f.size() != n) {
    throw ConfigError("qp: H and f dimensions disagree");
  }
  if (problem.G.rows() != problem.h.size() ||
      (problem.G.rows() > 0 && problem.G.cols() != n)) {
    throw ConfigError("qp: G and h dimensions disagree");
  }
  if (problem.A_eq.rows() != problem.b_eq.size() ||
      (problem.A_eq.rows() > 0 && problem.A_eq.cols() != n)) {
    throw ConfigError("qp: A_eq and b_eq dimensions disagree");
  }
  try {
    QpSolution sol = solve_definite(problem);
    return sol;
  } catch (const NumericalError&) {
    // Not positive definite: verify PSD, then go through the proximal path.
    psd_check_shift(problem.H);
    return solve_semidefinite(problem);
  }
}

std::string qp_to_json(const QpProblem& p) {
  std::ostringstream out;
  out.precision(17);
  auto emit_matrix = [&out](const Eigen::MatrixXd& M) {
    out << "[";
    for (int i = 0; i < M.rows(); ++i) {
      out << (i ? ",[" : "[");
      for (int j = 0; j < M.cols(); ++j) out << (j ? "," : "") << M(i, j);
      out << "]";
    }
    out << "]";
  };
  auto emit_vector = [&out](const Eigen::VectorXd& v) {
    out << "[";
    for (int i = 0; i < v.size(); ++i) out << (i ? "," : "") << v(i);
    out << "]";
  };
  out << "{\"H\":";
  emit_matrix(p.H);
  out << ",\"f\":";
  emit_vector(p.f);
  out << ",\"G\":";
  emit_matrix(p.G);
  out << ",\"h\":";
  emit_vector(p.h);
  out << ",\"A_eq\":";
  emit_matrix(p.A_eq);
  out << ",\"b_eq\":";
  emit_vector(p.b_eq);
  out << "}";
  return out.str();
}

}  // namespace smpc
