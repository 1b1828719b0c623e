#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "smpc/controller.hpp"
#include "smpc/tightening.hpp"

namespace smpc {

/// One closed-loop trace under a fixed disturbance sequence.
struct Trajectory {
  Eigen::MatrixXd states;       ///< n x (T+1), includes the terminal state
  Eigen::MatrixXd inputs;       ///< m x T
  Eigen::VectorXd stage_costs;  ///< T, realized l(x(k), u(k))
  /// Per step, 1 when the program was solved (always 1 for pure feedback).
  std::vector<std::uint8_t> feasible;
  Eigen::Index fallback_steps = 0;      ///< steps served by u = K x
  Eigen::Index candidate_failures = 0;  ///< shifted warm starts that missed
  Eigen::Index dominance_failures = 0;  ///< optimum costlier than a warm start
};

/// Closed-loop metrics for one controller over all realizations.  Rates are
/// fractions; `alarm` is empty unless the run was cut short by a feasibility
/// loss, in which case the metrics cover only the completed realizations.
struct ControllerReport {
  std::string label;
  double avg_cost = std::numeric_limits<double>::quiet_NaN();
  /// avg_cost divided by the reference law's avg_cost (NaN without one).
  double normalized_cost = std::numeric_limits<double>::quiet_NaN();
  /// Per state row: fraction of (realization, windowed step) pairs violating.
  Eigen::VectorXd violation_rate;
  double max_violation_rate = 0.0;
  /// Per step k: fraction of realizations with any state-row violation.
  Eigen::VectorXd violations_per_step;
  Eigen::Index feasibility_failures = 0;  ///< fallback steps across the run
  Eigen::Index candidate_failures = 0;
  Eigen::Index dominance_failures = 0;
  Eigen::Index input_violations = 0;  ///< hard input rows broken (sanity; 0)
  /// Steady-state average-cost bound tr(P D Sigma_w D') for this design.
  double performance_bound = std::numeric_limits<double>::quiet_NaN();
  /// Windowed mean cost of each realization (NaN when not completed).
  Eigen::VectorXd cost_per_realization;
  Eigen::Index realizations_completed = 0;
  double runtime_seconds = 0.0;
  std::string alarm;  ///< feasibility-loss message; empty on a clean run
};

/// Monte-Carlo experiment: every listed controller is rolled out on the same
/// disturbance realizations (common random numbers).
struct ExperimentConfig {
  std::vector<ControllerDesign> controllers;
  std::vector<std::string> labels;  ///< optional; kind names when empty
  Eigen::VectorXd x0;               ///< empty = origin
  Eigen::Index sim_length = 300;
  Eigen::Index num_realizations = 1000;
  Eigen::Index window_lo = 50;   ///< metric window, inclusive
  Eigen::Index window_hi = 299;  ///< inclusive; must be < sim_length
  std::uint64_t seed = 0;
  int jobs = 1;
  /// Check the shifted warm start before every re-solve (skipped for pure
  /// feedback); failures are counted, never fatal.
  bool check_candidates = true;
  /// When nonempty, reports also carry avg_cost relative to the pure
  /// feedback law u = reference_gain x run on the same disturbances.
  Eigen::MatrixXd reference_gain;
};

struct SimulationReport {
  std::vector<ControllerReport> controllers;
  /// Windowed average cost of the normalization law (NaN without one).
  double reference_cost = std::numeric_limits<double>::quiet_NaN();
  Eigen::Index sim_length = 0;
  Eigen::Index num_realizations = 0;
  Eigen::Index window_lo = 0;
  Eigen::Index window_hi = 0;
  std::uint64_t seed = 0;
};

/// Reset-period sweep: one design + run per entry on shared disturbances.
struct SweepConfig {
  LinearStochasticSystem sys;
  MixedConstraints constraints;
  CostSpec cost;
  DisturbanceModel disturbance;
  ScenarioConfig scenario;
  Eigen::Index horizon = 10;
  std::vector<Eigen::Index> periods;  ///< 0 = never reset
  bool exact_first_input = true;
  /// Fixed feedback gain for every period; empty = tune per period via the
  /// largest-saturation line search below.
  Eigen::MatrixXd fixed_gain;
  double tune_target = 0.9;  ///< saturation target for the per-period search
  double tune_lo = 1e-2;     ///< line-search bracket on the (1,1) state weight
  double tune_hi = 1e6;
  /// Rollout settings; the `controllers`/`labels` fields are ignored.
  ExperimentConfig experiment;
};

struct SweepEntry {
  Eigen::Index period = 0;
  bool designed = false;     ///< offline design succeeded
  std::string design_error;  ///< set when designed == false
  Eigen::MatrixXd K;         ///< gain used (fixed or tuned)
  double tuned_q11 = std::numeric_limits<double>::quiet_NaN();
  ControllerReport report;  ///< valid when designed
};

struct SweepReport {
  std::vector<SweepEntry> entries;
  double reference_cost = std::numeric_limits<double>::quiet_NaN();
};

/// Draws `count` disturbance sequences of `steps` samples each.  Sequence i
/// comes from an independent stream derived from (seed, i), so the result is
/// reproducible and independent of how callers chunk the work.
std::vector<Eigen::MatrixXd> sample_sequences(const DisturbanceModel& model,
                                              Eigen::Index steps,
                                              Eigen::Index count,
                                              std::uint64_t seed);

/// Rolls one controller forward under a fixed disturbance sequence (q x T).
/// The state must be freshly initialized at x0.  The plant update is exact:
/// x(k+1) = A x(k) + B u(k) + D w(k).
///
/// Feasibility losses: kinds without a feasibility guarantee (naive, and
/// trivially pure feedback) fall back to u = K x and keep going (counted);
/// for the guaranteed kinds a loss at k = 0 means the initial state does not
/// fit the program (ConfigError) and a loss at k >= 1 breaks the
/// recursive-feasibility guarantee (InvariantViolation).
Trajectory rollout(ControllerState& state, const Eigen::VectorXd& x0,
                   const Eigen::MatrixXd& sequence,
                   bool check_candidates = true);

/// Runs every controller in `config` over the same disturbance draws and
/// aggregates windowed cost and violation statistics.  Pure function of
/// (config, seed): reports are identical across runs and job counts.
SimulationReport monte_carlo(const ExperimentConfig& config);

/// Same metrics for the pure linear law u = K x (no program, no fallback).
/// The performance bound uses the terminal weight of the loop closed by K.
ControllerReport baseline_feedback(const LinearStochasticSystem& sys,
                                   const MixedConstraints& constraints,
                                   const CostSpec& cost,
                                   const DisturbanceModel& disturbance,
                                   const Eigen::MatrixXd& K,
                                   const ExperimentConfig& experiment,
                                   const std::string& label = "feedback");

/// Designs and simulates one periodic-reset controller per requested period
/// on shared disturbance draws.  Per-period design failures are recorded in
/// the entry, never fatal.
SweepReport sweep_m(const SweepConfig& config);

}  // namespace smpc
