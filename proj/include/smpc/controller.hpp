#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "smpc/polytope.hpp"
#include "smpc/qp.hpp"
#include "smpc/system.hpp"
#include "smpc/tightening.hpp"

namespace smpc {

/// Receding-horizon controller families sharing the input split u = Kx + c.
///
/// - Naive:     restarts the prediction at the measurement every step and
///              applies stage-indexed tightening as if errors never
///              accumulated across steps.  Kept as a baseline; its program
///              can become infeasible after disturbances hit.
/// - Robust:    restarts at the measurement but tightens future stages by
///              worst-case error accumulation, with the first input
///              constrained exactly.  Feasibility survives any bounded
///              disturbance, at the price of heavy tightening.
/// - Indirect:  propagates a nominal chain that is never reset; the
///              measurement enters through the cost only, so the feasible
///              set does not depend on the disturbances at all.
/// - MultiStep: resets the nominal chain to the measurement every `period`
///              steps and carries a second chain so constraints stay valid
///              across resets; interpolates between Robust (period 1) and
///              Indirect (period 0 = never reset).
/// - Feedback:  pure linear law u = Kx, no optimization.  Baseline for
///              cost/violation comparisons.
enum class ControllerKind { Feedback, Naive, Robust, Indirect, MultiStep };

/// Canonical config-file spelling: "feedback", "naive", "rs", "if", "ms".
std::string controller_kind_name(ControllerKind kind);
ControllerKind controller_kind_from_name(const std::string& name);

/// Everything the offline design stage needs to know.
struct ControllerRequest {
  ControllerKind kind = ControllerKind::Indirect;
  Eigen::Index horizon = 10;  ///< prediction steps N (>= 1)
  Eigen::Index period = 0;    ///< MultiStep reset period M; 0 = never reset
  /// Replace the first predicted input constraint by the exact constraint on
  /// the applied input Kx + c_0 (uses the measurement instead of the nominal
  /// chain).  Always on for Robust, meaningless for Naive/Feedback.
  bool exact_first_input = true;
  Eigen::MatrixXd K;          ///< tube feedback gain (m x n), required
  Eigen::Index k_bar = 0;     ///< tightening prefix end; 0 = pick from decay
};

/// Offline artifacts: closed loop, tightening sequences, terminal cost and
/// terminal sets.  Self-contained value type; everything the runtime needs.
struct ControllerDesign {
  ControllerKind kind = ControllerKind::Feedback;
  Eigen::Index horizon = 0;
  Eigen::Index period = 0;
  bool exact_first_input = true;
  Eigen::Index k_bar = 0;

  LinearStochasticSystem sys;
  MixedConstraints constraints;
  CostSpec cost;
  DisturbanceModel disturbance;
  ScenarioConfig scenario;  ///< sampling parameters used for the levels

  ClosedLoopDesign loop;
  TerminalCost terminal;
  GeometricTail tail;

  TighteningProfile gamma;      ///< per-step levels from the scenario stage
  TighteningProfile one_step;   ///< worst-case one-step increments
  TighteningProfile beta;       ///< no-reset accumulation (Robust only)
  TighteningProfile beta_tilde; ///< periodic accumulation (finite MultiStep)

  /// Terminal set for Naive/Robust/Indirect and never-reset MultiStep.
  Polytope terminal_set;
  /// Finite MultiStep: one terminal set per reset phase mod(k, period).
  std::vector<Polytope> terminal_set_by_phase;
  /// Finite MultiStep with horizon < 2*period: terminal set for the second
  /// chain (otherwise its constraints end inside the horizon and no set is
  /// needed).
  Polytope secondary_terminal_set;
  bool use_secondary_terminal = false;
};

/// Outcome of one controller step.
struct StepResult {
  Eigen::VectorXd input;   ///< applied input u = Kx + offset
  Eigen::VectorXd offset;  ///< first optimized offset c_0 (zero on fallback)
  bool feasible = true;    ///< program had a solution
  bool fallback = false;   ///< infeasible step fell back to u = Kx
  /// Value of the finite-horizon program at the optimum, including the parts
  /// that do not depend on the decision variables; NaN when infeasible.  For
  /// Feedback this is the infinite-horizon cost-to-go x'Px + p'x.
  double objective = 0.0;
  int iterations = 0;
  int active_set_size = 0;
  /// Start of the constraint chain this step (the measurement for kinds that
  /// restart there, the internal nominal state otherwise).  The cost chain
  /// always starts at the measurement.
  Eigen::VectorXd nominal;
};

/// Shifted previous optimum evaluated against the current step's program.
struct CandidateReport {
  Eigen::MatrixXd sequence;  ///< m x N: previous offsets shifted, zero-padded
  Eigen::VectorXd slack;     ///< per-row h - G c; negative = violated
  double min_slack = 0.0;
  bool feasible = false;     ///< min_slack >= -1e-8
  double objective = 0.0;    ///< program value of the candidate
};

namespace detail {

/// One fixed constraint layout.  The matrix G never changes between steps;
/// the right-hand side is rebuilt each step from the three possible row
/// sources (primary chain, secondary chain, measurement).
struct QpStructure {
  Eigen::MatrixXd G;            ///< rows x N*m
  Eigen::VectorXd rhs_base;     ///< constant part of h
  Eigen::MatrixXd from_s;       ///< h -= from_s * s
  Eigen::MatrixXd from_z;       ///< h -= from_z * z
  Eigen::MatrixXd from_x;       ///< h -= from_x * x
  /// Rows whose tightening level moves with the wall-clock step index
  /// (rhs_base holds 1 there; the level is subtracted at assembly time).
  std::vector<Eigen::Index> shifted_rows;
  std::vector<Eigen::Index> shifted_row_j;
  std::vector<Eigen::Index> shifted_depth;
  /// Rows with an all-zero G row (they constrain known quantities only);
  /// checked before the solver ever sees them.
  std::vector<Eigen::Index> constant_rows;
};

/// Condensed prediction: with C = [c_0; ...; c_{N-1}] the chain is
/// s_i = state_map_i y + input_map_i C, and the program value is
/// 0.5 C'H C + f(y_cost)'C + offset(y_cost).
struct CondensedPrediction {
  Eigen::MatrixXd state_map;     ///< (N+1)n x n
  Eigen::MatrixXd input_map;     ///< (N+1)n x N*m
  Eigen::MatrixXd hessian;       ///< N*m x N*m, positive definite
  Eigen::MatrixXd linear_state;  ///< f = linear_state * y_cost + linear_const
  Eigen::VectorXd linear_const;
  Eigen::MatrixXd offset_quad;   ///< decision-independent objective pieces
  Eigen::VectorXd offset_lin;
  double offset_const = 0.0;
};

}  // namespace detail

/// Per-trajectory runtime state.  One instance per rollout (copyable; use
/// one per thread).  The step protocol is strict:
///   make_controller -> step -> advance_nominal -> [candidate_solution] ->
///   step -> advance_nominal -> ...
/// and reset_controller rewinds to a fresh trajectory without rebuilding
/// the cached program.
struct ControllerState {
  ControllerDesign design;
  long k = 0;              ///< wall-clock step of the NEXT step() call
  Eigen::VectorXd s;       ///< primary nominal chain
  Eigen::VectorXd z;       ///< secondary chain (finite MultiStep)
  Eigen::MatrixXd last_c;  ///< m x N offsets from the latest step
  bool last_feasible = false;
  bool awaiting_advance = false;  ///< step() ran; advance_nominal() pending

  detail::CondensedPrediction pred;
  std::vector<detail::QpStructure> structures;
  std::optional<detail::DualActiveSetSolver> solver;
};

/// Run the offline design stage: close the loop, compute tightening levels
/// and terminal artifacts for the requested kind.  Throws DesignError when
/// the design is structurally infeasible (empty terminal set), ConfigError
/// on bad inputs.
ControllerDesign design_controller(const ControllerRequest& request,
                                   const LinearStochasticSystem& sys,
                                   const MixedConstraints& constraints,
                                   const CostSpec& cost,
                                   const DisturbanceModel& disturbance,
                                   const ScenarioConfig& scenario);

/// Build the runtime state (condensed program, constraint layouts, solver
/// workspace) and arm it at x0.  The heavy work happens once here; prefer
/// reset_controller over rebuilding when running many trajectories.
ControllerState make_controller(const ControllerDesign& design,
                                const Eigen::VectorXd& x0);

/// Rewind an existing state to step 0 at a new initial condition.
void reset_controller(ControllerState& state, const Eigen::VectorXd& x0);

/// Assemble the program that step() would solve right now, without solving.
/// Pure with respect to the state; useful for inspection and tests.
QpProblem controller_qp(const ControllerState& state, const Eigen::VectorXd& x);

/// Solve one step given the measurement x.  Infeasibility is reported, not
/// thrown (the caller owns the fallback policy); solver breakdown throws
/// NumericalError.  Must be followed by advance_nominal.
StepResult step(ControllerState& state, const Eigen::VectorXd& x);

/// Move the nominal chains one step forward using the offsets just applied,
/// resetting them to the new measurement where the kind requires it, and
/// increment the step index.
void advance_nominal(ControllerState& state, const Eigen::VectorXd& x_next);

/// Evaluate the shifted-and-padded previous optimum against the program of
/// the upcoming step (call between advance_nominal and step).  A feasible
/// report with objective no smaller than the next step's optimum is the
/// per-step witness of recursive feasibility.
CandidateReport candidate_solution(const ControllerState& state,
                                   const Eigen::VectorXd& x);

}  // namespace smpc
