#include "smpc/simulator.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "smpc/errors.hpp"
#include "smpc/parallel.hpp"
#include "smpc/rng.hpp"

namespace smpc {

namespace {

constexpr double kViolationTol = 1e-9;   // absorbs solver noise at the bound
constexpr double kDominanceTol = 1e-7;   // relative, warm start vs. optimum

Eigen::MatrixXd draw_sequence(const DisturbanceSampler& sampler,
                              Eigen::Index q, Eigen::Index steps,
                              std::uint64_t seed) {
  RandomStream rng(seed);
  Eigen::MatrixXd seq(q, steps);
  Eigen::VectorXd w(q);
  for (Eigen::Index k = 0; k < steps; ++k) {
    sampler.draw(rng, w);
    seq.col(k) = w;
  }
  return seq;
}

/// Steady-state average-cost bound tr(P D Sigma_w D') of a closed loop.
double loop_cost_bound(const ControllerDesign& d) {
  return (d.sys.D.transpose() * d.terminal.P * d.sys.D *
          d.disturbance.covariance)
      .trace();
}

/// Per-realization tallies, kept in disjoint slots so that parallel chunks
/// never contend and the final reduction is a fixed-order sequential sum.
struct Tally {
  Eigen::VectorXd cost_mean;     // windowed mean; NaN until completed
  Eigen::MatrixXd row_counts;    // state rows x realizations, windowed
  Eigen::MatrixXd step_counts;   // steps x realizations, 0/1 any-row
  Eigen::VectorXd fallback;      // per realization
  Eigen::VectorXd candidate;
  Eigen::VectorXd dominance;
  Eigen::VectorXd input_bad;

  Tally(Eigen::Index state_rows, Eigen::Index steps, Eigen::Index count)
      : cost_mean(Eigen::VectorXd::Constant(
            count, std::numeric_limits<double>::quiet_NaN())),
        row_counts(Eigen::MatrixXd::Zero(state_rows, count)),
        step_counts(Eigen::MatrixXd::Zero(steps, count)),
        fallback(Eigen::VectorXd::Zero(count)),
        candidate(Eigen::VectorXd::Zero(count)),
        dominance(Eigen::VectorXd::Zero(count)),
        input_bad(Eigen::VectorXd::Zero(count)) {}
};

/// Rolls every realization of one design and reduces the tallies into a
/// report.  Deterministic for any job count: draws are per-realization
/// streams and the reduction always runs in realization order.
ControllerReport run_design(const ControllerDesign& design,
                            const std::string& label,
                            const ExperimentConfig& cfg,
                            const Eigen::VectorXd& x0) {
  const auto t_start = std::chrono::steady_clock::now();
  const Eigen::Index T = cfg.sim_length;
  const Eigen::Index count = cfg.num_realizations;
  const Eigen::Index ns = design.constraints.num_state_rows;
  const Eigen::Index window = cfg.window_hi - cfg.window_lo + 1;
  const DisturbanceSampler sampler(design.disturbance);
  const Eigen::Index q = design.sys.D.cols();

  Tally tally(ns, T, count);
  std::string alarm;

  try {
    parallel_for(count, cfg.jobs, [&](long begin, long end) {
      ControllerState state = make_controller(design, x0);
      for (long r = begin; r < end; ++r) {
        const Eigen::MatrixXd seq =
            draw_sequence(sampler, q, T, child_seed(cfg.seed, r));
        reset_controller(state, x0);
        Trajectory traj;
        try {
          traj = rollout(state, x0, seq, cfg.check_candidates);
        } catch (const InvariantViolation& e) {
          std::ostringstream msg;
          msg << label << ", realization " << r << ": " << e.what();
          throw InvariantViolation(msg.str());
        }
        double cost = 0.0;
        for (Eigen::Index k = cfg.window_lo; k <= cfg.window_hi; ++k)
          cost += traj.stage_costs(k);
        tally.cost_mean(r) = cost / static_cast<double>(window);
        for (Eigen::Index k = 0; k < T; ++k) {
          bool any = false;
          for (Eigen::Index j = 0; j < ns; ++j) {
            const bool bad = design.constraints.F.row(j).dot(
                                 traj.states.col(k)) > 1.0 + kViolationTol;
            any = any || bad;
            if (bad && k >= cfg.window_lo && k <= cfg.window_hi)
              tally.row_counts(j, r) += 1.0;
          }
          if (any) tally.step_counts(k, r) = 1.0;
          for (Eigen::Index j = ns; j < design.constraints.rows(); ++j)
            if (design.constraints.G.row(j).dot(traj.inputs.col(k)) >
                1.0 + kViolationTol)
              tally.input_bad(r) += 1.0;
        }
        tally.fallback(r) = static_cast<double>(traj.fallback_steps);
        tally.candidate(r) = static_cast<double>(traj.candidate_failures);
        tally.dominance(r) = static_cast<double>(traj.dominance_failures);
      }
    });
  } catch (const InvariantViolation& e) {
    alarm = e.what();  // partial report below covers completed realizations
  }

  ControllerReport report;
  report.label = label;
  report.alarm = alarm;
  report.performance_bound = loop_cost_bound(design);
  report.violation_rate = Eigen::VectorXd::Zero(ns);
  report.violations_per_step = Eigen::VectorXd::Zero(T);

  double cost_sum = 0.0;
  Eigen::Index completed = 0;
  for (Eigen::Index r = 0; r < count; ++r) {
    if (std::isnan(tally.cost_mean(r))) continue;
    ++completed;
    cost_sum += tally.cost_mean(r);
    report.violation_rate += tally.row_counts.col(r);
    report.violations_per_step += tally.step_counts.col(r);
    report.feasibility_failures += static_cast<Eigen::Index>(tally.fallback(r));
    report.candidate_failures += static_cast<Eigen::Index>(tally.candidate(r));
    report.dominance_failures += static_cast<Eigen::Index>(tally.dominance(r));
    report.input_violations += static_cast<Eigen::Index>(tally.input_bad(r));
  }
  report.cost_per_realization = tally.cost_mean;
  report.realizations_completed = completed;
  if (completed > 0) {
    report.avg_cost = cost_sum / static_cast<double>(completed);
    report.violation_rate /= static_cast<double>(completed * window);
    report.violations_per_step /= static_cast<double>(completed);
    report.max_violation_rate =
        ns > 0 ? report.violation_rate.maxCoeff() : 0.0;
  }
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return report;
}

ControllerDesign feedback_design(const LinearStochasticSystem& sys,
                                 const MixedConstraints& constraints,
                                 const CostSpec& cost,
                                 const DisturbanceModel& disturbance,
                                 const Eigen::MatrixXd& K) {
  ControllerRequest req;
  req.kind = ControllerKind::Feedback;
  req.horizon = 1;
  req.K = K;
  return design_controller(req, sys, constraints, cost, disturbance,
                           ScenarioConfig{});
}

Eigen::VectorXd resolve_x0(const ExperimentConfig& cfg, Eigen::Index n) {
  if (cfg.x0.size() == 0) return Eigen::VectorXd::Zero(n);
  if (cfg.x0.size() != n) {
    std::ostringstream msg;
    msg << "experiment initial state has dimension " << cfg.x0.size()
        << ", plant expects " << n;
    throw ConfigError(msg.str());
  }
  return cfg.x0;
}

void validate_experiment(const ExperimentConfig& cfg) {
  if (cfg.sim_length < 1)
    throw ConfigError("experiment: sim_length must be at least 1");
  if (cfg.num_realizations < 1)
    throw ConfigError("experiment: num_realizations must be at least 1");
  if (cfg.window_lo < 0 || cfg.window_hi < cfg.window_lo ||
      cfg.window_hi >= cfg.sim_length) {
    std::ostringstream msg;
    msg << "experiment: metric window [" << cfg.window_lo << ", "
        << cfg.window_hi << "] must be nonempty and end before sim_length "
        << cfg.sim_length;
    throw ConfigError(msg.str());
  }
}

}  // namespace

std::vector<Eigen::MatrixXd> sample_sequences(const DisturbanceModel& model,
                                              Eigen::Index steps,
                                              Eigen::Index count,
                                              std::uint64_t seed) {
  if (steps < 1 || count < 1)
    throw ConfigError("sample_sequences: steps and count must be positive");
  const DisturbanceSampler sampler(model);
  const Eigen::Index q = model.box.lower.size();
  std::vector<Eigen::MatrixXd> sequences;
  sequences.reserve(static_cast<size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i)
    sequences.push_back(draw_sequence(sampler, q, steps, child_seed(seed, i)));
  return sequences;
}

Trajectory rollout(ControllerState& state, const Eigen::VectorXd& x0,
                   const Eigen::MatrixXd& sequence, bool check_candidates) {
  const ControllerDesign& d = state.design;
  const Eigen::Index n = d.sys.A.rows();
  const Eigen::Index m = d.sys.B.cols();
  const Eigen::Index T = sequence.cols();
  if (state.k != 0 || state.awaiting_advance)
    throw ConfigError("rollout: controller state must be freshly initialized");
  if (x0.size() != n)
    throw ConfigError("rollout: initial state dimension mismatch");
  if ((state.s - x0).lpNorm<Eigen::Infinity>() != 0.0)
    throw ConfigError("rollout: controller was initialized at a different x0");
  if (sequence.rows() != d.sys.D.cols())
    throw ConfigError("rollout: disturbance dimension mismatch");
  if (T < 1) throw ConfigError("rollout: empty disturbance sequence");

  const bool pure_feedback = d.kind == ControllerKind::Feedback;
  const bool always_feasible =
      pure_feedback || d.kind == ControllerKind::Naive;

  Trajectory traj;
  traj.states.resize(n, T + 1);
  traj.inputs.resize(m, T);
  traj.stage_costs.resize(T);
  traj.feasible.assign(static_cast<size_t>(T), 1);

  Eigen::VectorXd x = x0;
  for (Eigen::Index k = 0; k < T; ++k) {
    double candidate_objective = 0.0;
    bool have_candidate = false;
    if (check_candidates && !pure_feedback && k > 0 && state.last_feasible) {
      const CandidateReport cand = candidate_solution(state, x);
      if (cand.feasible) {
        candidate_objective = cand.objective;
        have_candidate = true;
      } else {
        ++traj.candidate_failures;
      }
    }

    const StepResult res = step(state, x);
    if (!res.feasible) {
      if (!always_feasible) {
        std::ostringstream msg;
        msg << controller_kind_name(d.kind)
            << " controller lost feasibility at step " << k;
        if (k == 0)
          throw ConfigError(msg.str() +
                            " (initial state outside the feasible region)");
        throw InvariantViolation(msg.str());
      }
      ++traj.fallback_steps;
      traj.feasible[static_cast<size_t>(k)] = 0;
    } else if (have_candidate &&
               res.objective >
                   candidate_objective +
                       kDominanceTol * (1.0 + std::abs(res.objective))) {
      ++traj.dominance_failures;
    }

    traj.states.col(k) = x;
    traj.inputs.col(k) = res.input;
    traj.stage_costs(k) = stage_cost(d.cost, x, res.input);
    x = d.sys.A * x + d.sys.B * res.input + d.sys.D * sequence.col(k);
    advance_nominal(state, x);
  }
  traj.states.col(T) = x;
  return traj;
}

SimulationReport monte_carlo(const ExperimentConfig& config) {
  validate_experiment(config);
  if (config.controllers.empty())
    throw ConfigError("monte_carlo: no controllers to simulate");
  if (!config.labels.empty() &&
      config.labels.size() != config.controllers.size())
    throw ConfigError("monte_carlo: labels must match controllers one-to-one");
  const Eigen::Index n = config.controllers.front().sys.A.rows();
  for (const ControllerDesign& d : config.controllers)
    if (d.sys.A.rows() != n)
      throw ConfigError("monte_carlo: controllers disagree on the state size");
  const Eigen::VectorXd x0 = resolve_x0(config, n);

  SimulationReport report;
  report.sim_length = config.sim_length;
  report.num_realizations = config.num_realizations;
  report.window_lo = config.window_lo;
  report.window_hi = config.window_hi;
  report.seed = config.seed;

  if (config.reference_gain.size() > 0) {
    const ControllerDesign& host = config.controllers.front();
    const ControllerDesign ref =
        feedback_design(host.sys, host.constraints, host.cost,
                        host.disturbance, config.reference_gain);
    report.reference_cost =
        run_design(ref, "reference", config, x0).avg_cost;
  }

  for (size_t i = 0; i < config.controllers.size(); ++i) {
    const ControllerDesign& d = config.controllers[i];
    const std::string label = config.labels.empty()
                                  ? std::string(controller_kind_name(d.kind))
                                  : config.labels[i];
    ControllerReport cr = run_design(d, label, config, x0);
    cr.normalized_cost = cr.avg_cost / report.reference_cost;
    report.controllers.push_back(std::move(cr));
  }
  return report;
}

ControllerReport baseline_feedback(const LinearStochasticSystem& sys,
                                   const MixedConstraints& constraints,
                                   const CostSpec& cost,
                                   const DisturbanceModel& disturbance,
                                   const Eigen::MatrixXd& K,
                                   const ExperimentConfig& experiment,
                                   const std::string& label) {
  validate_experiment(experiment);
  const ControllerDesign d =
      feedback_design(sys, constraints, cost, disturbance, K);
  const Eigen::VectorXd x0 = resolve_x0(experiment, sys.A.rows());
  ControllerReport report = run_design(d, label, experiment, x0);
  if (experiment.reference_gain.size() > 0) {
    const ControllerDesign ref = feedback_design(
        sys, constraints, cost, disturbance, experiment.reference_gain);
    report.normalized_cost =
        report.avg_cost / run_design(ref, "reference", experiment, x0).avg_cost;
  }
  return report;
}

SweepReport sweep_m(const SweepConfig& config) {
  validate_experiment(config.experiment);
  if (config.periods.empty())
    throw ConfigError("sweep_m: no reset periods requested");
  const Eigen::VectorXd x0 =
      resolve_x0(config.experiment, config.sys.A.rows());

  SweepReport report;
  if (config.experiment.reference_gain.size() > 0) {
    const ControllerDesign ref =
        feedback_design(config.sys, config.constraints, config.cost,
                        config.disturbance, config.experiment.reference_gain);
    report.reference_cost =
        run_design(ref, "reference", config.experiment, x0).avg_cost;
  }

  for (const Eigen::Index period : config.periods) {
    SweepEntry entry;
    entry.period = period;
    std::ostringstream label;
    label << "ms/period-" << (period == 0 ? std::string("inf")
                                          : std::to_string(period));
    try {
      if (config.fixed_gain.size() > 0) {
        entry.K = config.fixed_gain;
      } else {
        const TubeGainResult tuned = tune_tube_gain(
            config.sys, config.constraints, config.cost, config.disturbance,
            period == 0 ? ProfileKind::Gamma : ProfileKind::BetaTilde, period,
            config.tune_target, config.tune_lo, config.tune_hi,
            config.scenario);
        entry.K = tuned.K;
        entry.tuned_q11 = tuned.q11;
      }
      ControllerRequest req;
      req.kind = ControllerKind::MultiStep;
      req.horizon = config.horizon;
      req.period = period;
      req.exact_first_input = config.exact_first_input;
      req.K = entry.K;
      const ControllerDesign design =
          design_controller(req, config.sys, config.constraints, config.cost,
                            config.disturbance, config.scenario);
      entry.designed = true;
      entry.report = run_design(design, label.str(), config.experiment, x0);
      entry.report.normalized_cost =
          entry.report.avg_cost / report.reference_cost;
    } catch (const DesignError& e) {
      entry.designed = false;
      entry.design_error = e.what();
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace smpc
