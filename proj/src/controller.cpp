#include "smpc/controller.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "smpc/errors.hpp"
#include "smpc/terminal_set.hpp"

namespace smpc {
namespace {

constexpr double kCandidateTol = 1e-8;
constexpr double kConstantRowTol = 1e-10;

/// Which state vector feeds a constraint row's right-hand side.
enum class Source { Primary, Secondary, Measured };

struct RowDraft {
  Eigen::RowVectorXd g;
  double rhs = 1.0;
  Eigen::RowVectorXd fs, fz, fx;
  bool shifted = false;
  Eigen::Index row_j = 0;
  Eigen::Index depth = 0;
};

/// Accumulates constraint rows for one fixed layout, then packs them into
/// the dense matrices the per-step assembly works with.
class StructureBuilder {
 public:
  StructureBuilder(const ControllerDesign& d,
                   const detail::CondensedPrediction& pred)
      : d_(d),
        n_(d.loop.Phi.rows()),
        m_(d.sys.B.cols()),
        vars_(d.horizon * d.sys.B.cols()) {
    const Eigen::Index N = d.horizon;
    rows_cache_.reserve(static_cast<size_t>(N));
    fgam_cache_.reserve(static_cast<size_t>(N));
    for (Eigen::Index i = 0; i < N; ++i) {
      Eigen::MatrixXd rows =
          d.loop.F_tilde * pred.input_map.middleRows(i * n_, n_);
      rows.middleCols(i * m_, m_) += d.constraints.G;
      rows_cache_.push_back(std::move(rows));
      fgam_cache_.push_back(d.loop.F_tilde *
                            pred.state_map.middleRows(i * n_, n_));
    }
    terminal_input_ = pred.input_map.middleRows(N * n_, n_);
    terminal_state_ = pred.state_map.middleRows(N * n_, n_);
  }

  void clear() { drafts_.clear(); }

  /// F_tilde s_depth + G c_depth <= 1 - level on the given chain.  Shifted
  /// rows leave the level to the per-step assembly (it moves with the step
  /// index).
  void mixed_row(Source src, Eigen::Index depth, Eigen::Index j, double level,
                 bool shifted) {
    RowDraft rd = blank();
    rd.g = rows_cache_[static_cast<size_t>(depth)].row(j);
    rd.rhs = shifted ? 1.0 : 1.0 - level;
    source_row(rd, src) = fgam_cache_[static_cast<size_t>(depth)].row(j);
    rd.shifted = shifted;
    rd.row_j = j;
    rd.depth = depth;
    drafts_.push_back(std::move(rd));
  }

  /// Hard constraint on the applied input: G_j (K x + c_0) <= 1 with the
  /// measurement x, bypassing the nominal chain entirely.
  void exact_input_row(Eigen::Index j) {
    RowDraft rd = blank();
    rd.g.segment(0, m_) = d_.constraints.G.row(j);
    rd.rhs = 1.0;
    rd.fx = d_.constraints.G.row(j) * d_.loop.K;
    drafts_.push_back(std::move(rd));
  }

  /// Membership of the horizon-end chain state in a fixed polytope.
  void terminal_rows(Source src, const Polytope& set) {
    const Eigen::MatrixXd g_part = set.H * terminal_input_;
    const Eigen::MatrixXd y_part = set.H * terminal_state_;
    for (Eigen::Index t = 0; t < set.H.rows(); ++t) {
      RowDraft rd = blank();
      rd.g = g_part.row(t);
      rd.rhs = set.b(t);
      source_row(rd, src) = y_part.row(t);
      drafts_.push_back(std::move(rd));
    }
  }

  detail::QpStructure pack() const {
    detail::QpStructure st;
    const Eigen::Index rows = static_cast<Eigen::Index>(drafts_.size());
    st.G.resize(rows, vars_);
    st.rhs_base.resize(rows);
    st.from_s = Eigen::MatrixXd::Zero(rows, n_);
    st.from_z = Eigen::MatrixXd::Zero(rows, n_);
    st.from_x = Eigen::MatrixXd::Zero(rows, n_);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const RowDraft& rd = drafts_[static_cast<size_t>(i)];
      st.G.row(i) = rd.g;
      st.rhs_base(i) = rd.rhs;
      st.from_s.row(i) = rd.fs;
      st.from_z.row(i) = rd.fz;
      st.from_x.row(i) = rd.fx;
      if (rd.shifted) {
        st.shifted_rows.push_back(i);
        st.shifted_row_j.push_back(rd.row_j);
        st.shifted_depth.push_back(rd.depth);
      }
      if (rd.g.lpNorm<Eigen::Infinity>() == 0.0) st.constant_rows.push_back(i);
    }
    return st;
  }

 private:
  RowDraft blank() const {
    RowDraft rd;
    rd.g = Eigen::RowVectorXd::Zero(vars_);
    rd.fs = Eigen::RowVectorXd::Zero(n_);
    rd.fz = Eigen::RowVectorXd::Zero(n_);
    rd.fx = Eigen::RowVectorXd::Zero(n_);
    return rd;
  }

  Eigen::RowVectorXd& source_row(RowDraft& rd, Source src) const {
    switch (src) {
      case Source::Primary: return rd.fs;
      case Source::Secondary: return rd.fz;
      case Source::Measured: return rd.fx;
    }
    throw ConfigError("unknown row source");
  }

  const ControllerDesign& d_;
  Eigen::Index n_, m_, vars_;
  std::vector<Eigen::MatrixXd> rows_cache_;  ///< F_tilde * input_map_i (+ G)
  std::vector<Eigen::MatrixXd> fgam_cache_;  ///< F_tilde * state_map_i
  Eigen::MatrixXd terminal_input_, terminal_state_;
  std::vector<RowDraft> drafts_;
};

detail::CondensedPrediction build_prediction(const ControllerDesign& d) {
  const Eigen::Index n = d.loop.Phi.rows();
  const Eigen::Index m = d.sys.B.cols();
  const Eigen::Index N = d.horizon;
  const Eigen::Index vars = N * m;

  detail::CondensedPrediction pred;
  pred.state_map.resize((N + 1) * n, n);
  pred.input_map = Eigen::MatrixXd::Zero((N + 1) * n, vars);
  pred.state_map.topRows(n) = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < N; ++i) {
    pred.state_map.middleRows((i + 1) * n, n) =
        d.loop.Phi * pred.state_map.middleRows(i * n, n);
    pred.input_map.middleRows((i + 1) * n, n) =
        d.loop.Phi * pred.input_map.middleRows(i * n, n);
    pred.input_map.block((i + 1) * n, i * m, n, m) += d.sys.B;
  }

  const Eigen::MatrixXd q_stage =
      d.cost.Q + d.loop.K.transpose() * d.cost.R * d.loop.K;
  const Eigen::VectorXd lin_stage = d.cost.q + d.loop.K.transpose() * d.cost.r;
  const Eigen::MatrixXd rk = d.cost.R * d.loop.K;

  pred.hessian = Eigen::MatrixXd::Zero(vars, vars);
  pred.linear_state = Eigen::MatrixXd::Zero(vars, n);
  pred.linear_const = Eigen::VectorXd::Zero(vars);
  pred.offset_quad = Eigen::MatrixXd::Zero(n, n);
  pred.offset_lin = Eigen::VectorXd::Zero(n);
  pred.offset_const = static_cast<double>(N) * d.cost.constant;

  for (Eigen::Index i = 0; i <= N; ++i) {
    const bool terminal = (i == N);
    const Eigen::MatrixXd& w = terminal ? d.terminal.P : q_stage;
    const Eigen::VectorXd& v = terminal ? d.terminal.p : lin_stage;
    const auto li = pred.input_map.middleRows(i * n, n);
    const auto gi = pred.state_map.middleRows(i * n, n);
    pred.hessian.noalias() += 2.0 * li.transpose() * w * li;
    pred.linear_state.noalias() += 2.0 * li.transpose() * w * gi;
    pred.linear_const.noalias() += li.transpose() * v;
    pred.offset_quad.noalias() += gi.transpose() * w * gi;
    pred.offset_lin.noalias() += gi.transpose() * v;
  }
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto li = pred.input_map.middleRows(i * n, n);
    const auto gi = pred.state_map.middleRows(i * n, n);
    const Eigen::MatrixXd cross = 2.0 * rk * li;  // applied-input cross terms
    pred.hessian.middleRows(i * m, m) += cross;
    pred.hessian.middleCols(i * m, m) += cross.transpose();
    pred.hessian.block(i * m, i * m, m, m) += 2.0 * d.cost.R;
    pred.linear_state.middleRows(i * m, m).noalias() += 2.0 * rk * gi;
    pred.linear_const.segment(i * m, m) += d.cost.r;
  }
  pred.hessian = 0.5 * (pred.hessian + pred.hessian.transpose()).eval();
  return pred;
}

std::vector<detail::QpStructure> build_structures(
    const ControllerDesign& d, const detail::CondensedPrediction& pred) {
  const Eigen::Index r = d.constraints.rows();
  const Eigen::Index ns = d.constraints.num_state_rows;
  const Eigen::Index N = d.horizon;
  StructureBuilder builder(d, pred);
  std::vector<detail::QpStructure> out;

  switch (d.kind) {
    case ControllerKind::Feedback:
      return out;
    case ControllerKind::Naive: {
      for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index j = 0; j < r; ++j)
          builder.mixed_row(Source::Measured, i, j, d.gamma.value(j, i), false);
      builder.terminal_rows(Source::Measured, d.terminal_set);
      out.push_back(builder.pack());
      return out;
    }
    case ControllerKind::Robust: {
      for (Eigen::Index j = ns; j < r; ++j) builder.exact_input_row(j);
      for (Eigen::Index i = 1; i < N; ++i)
        for (Eigen::Index j = 0; j < r; ++j)
          builder.mixed_row(Source::Measured, i, j, d.beta.value(j, i), false);
      builder.terminal_rows(Source::Measured, d.terminal_set);
      out.push_back(builder.pack());
      return out;
    }
    case ControllerKind::Indirect:
      break;
    case ControllerKind::MultiStep:
      if (d.period != 0) {
        // One layout per value of the steps-since-reset counter.
        for (Eigen::Index mk = 0; mk < 2 * d.period; ++mk) {
          builder.clear();
          const Eigen::Index phase = mk < d.period ? mk : mk - d.period;
          const Eigen::Index split = 2 * d.period - mk;
          if (d.exact_first_input)
            for (Eigen::Index j = ns; j < r; ++j) builder.exact_input_row(j);
          for (Eigen::Index i = 0; i < std::min(split, N); ++i)
            for (Eigen::Index j = 0; j < r; ++j) {
              if (i == 0 && j >= ns && d.exact_first_input) continue;
              builder.mixed_row(Source::Secondary, i, j,
                                d.beta_tilde.value(j, i + mk), false);
            }
          for (Eigen::Index i = split; i < N; ++i)
            for (Eigen::Index j = 0; j < r; ++j)
              builder.mixed_row(Source::Primary, i, j,
                                d.beta_tilde.value(j, i + phase), false);
          builder.terminal_rows(
              Source::Primary,
              d.terminal_set_by_phase[static_cast<size_t>(phase)]);
          if (d.use_secondary_terminal)
            builder.terminal_rows(Source::Secondary, d.secondary_terminal_set);
          out.push_back(builder.pack());
        }
        return out;
      }
      break;  // period 0: never reset, same layout as Indirect
  }

  // Indirect (and never-reset MultiStep): levels move with the step index.
  if (d.exact_first_input)
    for (Eigen::Index j = ns; j < r; ++j) builder.exact_input_row(j);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j < r; ++j) {
      if (i == 0 && j >= ns && d.exact_first_input) continue;
      builder.mixed_row(Source::Primary, i, j, 0.0, true);
    }
  builder.terminal_rows(Source::Primary, d.terminal_set);
  out.push_back(builder.pack());
  return out;
}

bool starts_at_measurement(ControllerKind kind) {
  return kind == ControllerKind::Naive || kind == ControllerKind::Robust;
}

struct Assembled {
  const detail::QpStructure* st = nullptr;
  Eigen::VectorXd h;
  Eigen::VectorXd f;
  Eigen::VectorXd y_cost;   ///< cost-chain start (the measurement)
  Eigen::VectorXd s_start;  ///< constraint-chain start
};

Assembled assemble_step(const ControllerState& state, const Eigen::VectorXd& x) {
  const ControllerDesign& d = state.design;
  if (d.kind == ControllerKind::Feedback)
    throw ConfigError("pure feedback has no program to assemble");
  if (state.awaiting_advance)
    throw ConfigError("advance_nominal must run before the next step");
  if (x.size() != d.loop.Phi.rows()) {
    std::ostringstream os;
    os << "measurement has dimension " << x.size() << ", expected "
       << d.loop.Phi.rows();
    throw ConfigError(os.str());
  }

  size_t index = 0;
  if (d.kind == ControllerKind::MultiStep && d.period != 0) {
    const long mk = state.k < d.period ? state.k
                                       : d.period + state.k % d.period;
    index = static_cast<size_t>(mk);
  }

  Assembled a;
  a.st = &state.structures[index];
  a.y_cost = x;  // every kind prices the prediction from the measurement
  a.s_start = starts_at_measurement(d.kind) ? x : state.s;

  a.h = a.st->rhs_base;
  a.h.noalias() -= a.st->from_s * a.s_start;
  a.h.noalias() -= a.st->from_z * state.z;
  a.h.noalias() -= a.st->from_x * x;
  for (size_t t = 0; t < a.st->shifted_rows.size(); ++t)
    a.h(a.st->shifted_rows[t]) -=
        d.gamma.value(a.st->shifted_row_j[t],
                      state.k + a.st->shifted_depth[t]);

  a.f = state.pred.linear_state * a.y_cost + state.pred.linear_const;
  return a;
}

double objective_offset(const detail::CondensedPrediction& pred,
                        const Eigen::VectorXd& y) {
  return y.dot(pred.offset_quad * y) + pred.offset_lin.dot(y) +
         pred.offset_const;
}

void require_nonempty(const Polytope& set, const std::string& label,
                      const TighteningProfile& profile) {
  if (!set.empty) return;
  const FeasibilityReport report = design_feasibility(profile);
  std::ostringstream os;
  os << "terminal set for " << label
     << " is empty: the tightening leaves no room (worst row slack "
     << report.slack.minCoeff() << ")\n  per-row slack (1 - saturation):";
  for (Eigen::Index j = 0; j < report.slack.size(); ++j)
    os << "\n    row " << j << ": " << report.slack(j)
       << (report.slack(j) < 0.0 ? "  <-- infeasible" : "");
  throw DesignError(os.str());
}

}  // namespace

std::string controller_kind_name(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::Feedback: return "feedback";
    case ControllerKind::Naive: return "naive";
    case ControllerKind::Robust: return "rs";
    case ControllerKind::Indirect: return "if";
    case ControllerKind::MultiStep: return "ms";
  }
  throw ConfigError("unknown controller kind");
}

ControllerKind controller_kind_from_name(const std::string& name) {
  if (name == "feedback") return ControllerKind::Feedback;
  if (name == "naive") return ControllerKind::Naive;
  if (name == "rs") return ControllerKind::Robust;
  if (name == "if") return ControllerKind::Indirect;
  if (name == "ms") return ControllerKind::MultiStep;
  throw ConfigError("unknown controller kind '" + name +
                    "' (expected feedback|naive|rs|if|ms)");
}

ControllerDesign design_controller(const ControllerRequest& request,
                                   const LinearStochasticSystem& sys,
                                   const MixedConstraints& constraints,
                                   const CostSpec& cost,
                                   const DisturbanceModel& disturbance,
                                   const ScenarioConfig& scenario) {
  const Eigen::Index n = sys.A.rows();
  const Eigen::Index m = sys.B.cols();
  if (request.K.rows() != m || request.K.cols() != n) {
    std::ostringstream os;
    os << "gain K is " << request.K.rows() << "x" << request.K.cols()
       << ", expected " << m << "x" << n;
    throw ConfigError(os.str());
  }
  if (request.kind != ControllerKind::Feedback && request.horizon < 1)
    throw ConfigError("horizon must be at least 1");
  if (request.period < 0) throw ConfigError("period must be nonnegative");
  if (cost.Q.rows() != n || cost.Q.cols() != n || cost.q.size() != n ||
      cost.R.rows() != m || cost.R.cols() != m || cost.r.size() != m)
    throw ConfigError("cost matrices do not match the system dimensions");
  if (Eigen::LLT<Eigen::MatrixXd>(cost.R).info() != Eigen::Success)
    throw ConfigError("input weight R must be positive definite");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> qe(cost.Q);
  if (qe.eigenvalues().minCoeff() < -1e-9)
    throw ConfigError("state weight Q must be positive semidefinite");

  ControllerDesign d;
  d.kind = request.kind;
  d.horizon = request.horizon;
  d.period = request.kind == ControllerKind::MultiStep ? request.period : 0;
  d.exact_first_input = request.exact_first_input;
  d.sys = sys;
  d.constraints = constraints;
  d.cost = cost;
  d.disturbance = disturbance;
  d.scenario = scenario;
  d.loop = closed_loop(sys, constraints, request.K);
  d.terminal = terminal_cost(sys, cost, request.K);
  if (d.kind == ControllerKind::Feedback) return d;

  d.tail = geometric_tail(d.loop, sys.D, disturbance.box);
  d.k_bar = request.k_bar > 0 ? request.k_bar : default_tail_index(d.tail);
  d.gamma = stochastic_terms(d.loop, sys, disturbance, d.k_bar, scenario);
  d.one_step = robust_terms(d.loop, sys.D, disturbance.box, d.k_bar + 1);

  switch (d.kind) {
    case ControllerKind::Naive:
      d.terminal_set = build_terminal_set(d.loop, d.gamma, d.horizon);
      require_nonempty(d.terminal_set, "the per-step-tightened design",
                       d.gamma);
      break;
    case ControllerKind::Robust:
      d.beta = rs_profile(d.gamma, d.one_step, d.tail);
      d.terminal_set = build_terminal_set(d.loop, d.beta, d.horizon);
      require_nonempty(d.terminal_set, "the worst-case-accumulation design",
                       d.beta);
      break;
    case ControllerKind::Indirect:
      d.terminal_set =
          build_terminal_set(d.loop, d.gamma, d.gamma.prefix_length());
      require_nonempty(d.terminal_set, "the never-reset design", d.gamma);
      break;
    case ControllerKind::MultiStep: {
      if (d.period == 0) {
        d.terminal_set =
            build_terminal_set(d.loop, d.gamma, d.gamma.prefix_length());
        require_nonempty(d.terminal_set, "the never-reset design", d.gamma);
        break;
      }
      d.beta_tilde = ms_profile(d.gamma, d.one_step, d.period, d.tail);
      d.terminal_set_by_phase.reserve(static_cast<size_t>(d.period));
      for (Eigen::Index phase = 0; phase < d.period; ++phase) {
        Polytope set =
            build_terminal_set(d.loop, d.beta_tilde, d.horizon + phase);
        std::ostringstream label;
        label << "the periodic-reset design at phase " << phase;
        require_nonempty(set, label.str(), d.beta_tilde);
        d.terminal_set_by_phase.push_back(std::move(set));
      }
      d.use_secondary_terminal = d.horizon < 2 * d.period;
      if (d.use_secondary_terminal) {
        d.secondary_terminal_set = build_terminal_set(
            d.loop, d.beta_tilde, d.horizon + 2 * d.period - 1);
        require_nonempty(d.secondary_terminal_set,
                         "the periodic-reset carry-over chain", d.beta_tilde);
      }
      break;
    }
    case ControllerKind::Feedback:
      break;
  }
  return d;
}

ControllerState make_controller(const ControllerDesign& design,
                                const Eigen::VectorXd& x0) {
  const Eigen::Index n = design.loop.Phi.rows();
  if (x0.size() != n) {
    std::ostringstream os;
    os << "initial state has dimension " << x0.size() << ", expected " << n;
    throw ConfigError(os.str());
  }
  ControllerState state;
  state.design = design;
  state.k = 0;
  state.s = x0;
  state.z = x0;
  state.last_c =
      Eigen::MatrixXd::Zero(design.sys.B.cols(),
                            std::max<Eigen::Index>(design.horizon, 1));
  if (design.kind != ControllerKind::Feedback) {
    state.pred = build_prediction(design);
    state.structures = build_structures(design, state.pred);
    state.solver.emplace(state.pred.hessian);
  }
  return state;
}

void reset_controller(ControllerState& state, const Eigen::VectorXd& x0) {
  if (x0.size() != state.design.loop.Phi.rows())
    throw ConfigError("reset state has the wrong dimension");
  state.k = 0;
  state.s = x0;
  state.z = x0;
  state.last_c.setZero();
  state.last_feasible = false;
  state.awaiting_advance = false;
}

QpProblem controller_qp(const ControllerState& state,
                        const Eigen::VectorXd& x) {
  const Assembled a = assemble_step(state, x);
  QpProblem qp;
  qp.H = state.pred.hessian;
  qp.f = a.f;
  qp.G = a.st->G;
  qp.h = a.h;
  qp.A_eq = Eigen::MatrixXd::Zero(0, qp.H.cols());
  qp.b_eq = Eigen::VectorXd::Zero(0);
  return qp;
}

StepResult step(ControllerState& state, const Eigen::VectorXd& x) {
  const ControllerDesign& d = state.design;
  StepResult result;

  if (d.kind == ControllerKind::Feedback) {
    if (state.awaiting_advance)
      throw ConfigError("advance_nominal must run before the next step");
    if (x.size() != d.loop.Phi.rows())
      throw ConfigError("measurement has the wrong dimension");
    result.input = d.loop.K * x;
    result.offset = Eigen::VectorXd::Zero(d.sys.B.cols());
    result.objective = x.dot(d.terminal.P * x) + d.terminal.p.dot(x);
    result.nominal = x;
    state.last_c.setZero();
    state.last_feasible = true;
    state.awaiting_advance = true;
    return result;
  }

  const Assembled a = assemble_step(state, x);
  result.nominal = a.s_start;

  // Rows that do not touch the decision variables constrain already-known
  // quantities; a violation there is infeasibility, not a solver problem.
  bool constant_row_violated = false;
  for (const Eigen::Index row : a.st->constant_rows)
    if (a.h(row) < -kConstantRowTol) constant_row_violated = true;

  const Eigen::Index m = d.sys.B.cols();
  if (!constant_row_violated) {
    const Eigen::MatrixXd no_eq = Eigen::MatrixXd::Zero(0, a.f.size());
    const Eigen::VectorXd no_rhs = Eigen::VectorXd::Zero(0);
    const QpSolution sol = state.solver->solve(a.f, no_eq, no_rhs, a.st->G, a.h);
    result.iterations = sol.iterations;
    result.active_set_size = static_cast<int>(sol.active_set.size());
    if (sol.status == QpStatus::Optimal) {
      state.last_c = Eigen::Map<const Eigen::MatrixXd>(sol.z.data(), m,
                                                       d.horizon);
      state.last_feasible = true;
      state.awaiting_advance = true;
      result.offset = state.last_c.col(0);
      result.input = d.loop.K * x + result.offset;
      result.objective =
          sol.objective + objective_offset(state.pred, a.y_cost);
      return result;
    }
    if (sol.status != QpStatus::Infeasible) {
      std::ostringstream os;
      os << "step " << state.k << " (" << controller_kind_name(d.kind)
         << "): solver reported "
         << (sol.status == QpStatus::Unbounded ? "an unbounded"
                                               : "a numerically failed")
         << " program";
      throw NumericalError(os.str());
    }
  }

  result.feasible = false;
  result.fallback = true;
  result.offset = Eigen::VectorXd::Zero(m);
  result.input = d.loop.K * x;
  result.objective = std::numeric_limits<double>::quiet_NaN();
  state.last_c.setZero();
  state.last_feasible = false;
  state.awaiting_advance = true;
  return result;
}

void advance_nominal(ControllerState& state, const Eigen::VectorXd& x_next) {
  if (!state.awaiting_advance)
    throw ConfigError("advance_nominal called without a preceding step");
  const ControllerDesign& d = state.design;
  if (x_next.size() != d.loop.Phi.rows())
    throw ConfigError("next measurement has the wrong dimension");

  const Eigen::VectorXd c0 = state.last_c.col(0);
  switch (d.kind) {
    case ControllerKind::Feedback:
    case ControllerKind::Naive:
    case ControllerKind::Robust:
      break;  // prediction restarts at the measurement anyway
    case ControllerKind::Indirect:
      state.s = d.loop.Phi * state.s + d.sys.B * c0;
      break;
    case ControllerKind::MultiStep: {
      const Eigen::VectorXd s_next = d.loop.Phi * state.s + d.sys.B * c0;
      if (d.period == 0) {
        state.s = s_next;
        break;
      }
      if ((state.k + 1) % d.period == 0) {
        state.z = s_next;     // carry the old chain across the reset
        state.s = x_next;
      } else {
        state.z = d.loop.Phi * state.z + d.sys.B * c0;
        state.s = s_next;
      }
      break;
    }
  }
  state.k += 1;
  state.awaiting_advance = false;
}

CandidateReport candidate_solution(const ControllerState& state,
                                   const Eigen::VectorXd& x) {
  const ControllerDesign& d = state.design;
  if (d.kind == ControllerKind::Feedback)
    throw ConfigError("pure feedback has no candidate to evaluate");
  if (state.awaiting_advance)
    throw ConfigError("candidates are evaluated after advance_nominal");
  if (state.k == 0)
    throw ConfigError("candidates need a previous step to shift");
  if (!state.last_feasible)
    throw ConfigError("candidates need a feasible previous step");

  const Eigen::Index m = d.sys.B.cols();
  const Eigen::Index N = d.horizon;
  CandidateReport report;
  report.sequence = Eigen::MatrixXd::Zero(m, N);
  if (N > 1) report.sequence.leftCols(N - 1) = state.last_c.rightCols(N - 1);

  const Assembled a = assemble_step(state, x);
  const Eigen::Map<const Eigen::VectorXd> v(report.sequence.data(), m * N);
  report.slack = a.h - a.st->G * v;
  report.min_slack = report.slack.minCoeff();
  report.feasible = report.min_slack >= -kCandidateTol;
  report.objective = 0.5 * v.dot(state.pred.hessian * v) + a.f.dot(v) +
                     objective_offset(state.pred, a.y_cost);
  return report;
}

}  // namespace smpc
