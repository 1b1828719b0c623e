#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "smpc/controller.hpp"
#include "smpc/simulator.hpp"
#include "smpc/tightening.hpp"

namespace smpc {

/// How a feedback gain is obtained during the design stage.
struct GainSpec {
  enum class Kind {
    Lqr,    ///< infinite-horizon LQR for (A, B, Q, R)
    Given,  ///< fixed matrix from the config
    Tuned,  ///< largest-saturation line search on the (1,1) state weight
  };
  Kind kind = Kind::Lqr;
  Eigen::MatrixXd K;  ///< Given only
  // Tuned only: which accumulation the search keeps feasible.  When not set
  // explicitly, the owning controller supplies profile and period.
  ProfileKind profile = ProfileKind::Beta;
  Eigen::Index period = 1;
  bool profile_explicit = false;
  double target = 0.95;
  double q11_lo = 1e-2;
  double q11_hi = 1e6;
};

/// One controller to design and simulate.
struct ControllerEntry {
  std::string label;  ///< report key; defaults to the kind name
  ControllerKind kind = ControllerKind::Indirect;
  Eigen::Index horizon = 10;  ///< "N"
  Eigen::Index period = 0;    ///< "M"; 0 = never reset ("inf")
  bool exact_first_input = true;
  GainSpec gain;
};

/// Optional reset-period sweep request.
struct SweepSection {
  bool present = false;
  Eigen::Index horizon = 10;
  std::vector<Eigen::Index> periods;  ///< 0 = never reset
  bool exact_first_input = true;
  /// Given/Lqr = one fixed gain for every period; Tuned = per-period search.
  GainSpec gain;
};

struct OutputSection {
  std::string dir = "out";
  std::vector<std::string> formats = {"json", "csv"};  ///< json, csv, svg
};

/// Fully parsed and validated configuration file.
struct ProjectConfig {
  LinearStochasticSystem sys;
  DisturbanceModel disturbance;
  MixedConstraints constraints;
  CostSpec cost;
  std::vector<ControllerEntry> controllers;
  ScenarioConfig scenario;  ///< "tightening" section
  Eigen::Index k_bar = 0;   ///< tail switch index; 0 = automatic
  /// Rollout settings; the controllers/labels/reference fields are filled
  /// later from the design stage.
  ExperimentConfig experiment;
  GainSpec reference;  ///< normalization law, when present
  bool has_reference = false;
  SweepSection sweep;
  OutputSection output;
};

/// Parse and validate a configuration document.  Every object is checked
/// against its set of known keys; unknown keys are an error.  Throws
/// ConfigError with the offending location.
ProjectConfig parse_config(const std::string& text);

/// Read a file and parse it (errors carry the path).
ProjectConfig load_config(const std::string& path);

/// Serialize back to JSON.  parse(config_to_json(parse(t))) is identical to
/// parse(t).
std::string config_to_json(const ProjectConfig& config);

/// Everything the offline stage produced: one design per controller entry,
/// the resolved normalization gain, and provenance for reproducibility.
struct DesignBundle {
  std::vector<std::string> labels;
  std::vector<ControllerDesign> designs;
  Eigen::MatrixXd reference_gain;  ///< empty when the config names none
  std::string tool_version;
  std::uint64_t scenario_seed = 0;
  long scenario_samples = 0;
  std::uint64_t config_fingerprint = 0;  ///< hash of the design inputs
};

/// Hash of every config field the offline stage depends on (model,
/// disturbance, constraints, cost, controller entries, sampling setup).
/// Experiment, sweep, and output settings are excluded, as is the worker
/// count, so re-running a simulation elsewhere or with a different seed does
/// not invalidate an artifact.
std::uint64_t design_fingerprint(const ProjectConfig& config);

/// Refuse a bundle whose fingerprint disagrees with the config's: simulating
/// against designs built from different inputs silently answers the wrong
/// question.  Throws ConfigError carrying both fingerprints.  Bundles without
/// a recorded fingerprint (hand-assembled in tests) pass.
void require_matching_design(const ProjectConfig& config,
                             const DesignBundle& bundle);

/// Run the offline stage for every controller entry: resolve gains (tuned
/// gains are searched once per distinct request), compute tightening levels
/// and terminal artifacts.  Throws DesignError when a design is infeasible.
DesignBundle design_from_config(const ProjectConfig& config);

/// Lossless artifact round-trip: doubles survive bit-exactly, so simulations
/// from a reloaded bundle reproduce the original reports.
std::string bundle_to_json(const DesignBundle& bundle);
DesignBundle bundle_from_json(const std::string& text);
DesignBundle load_bundle(const std::string& path);

/// Assemble the Monte-Carlo experiment from a config and its design bundle.
ExperimentConfig experiment_from(const ProjectConfig& config,
                                 const DesignBundle& bundle);

/// Assemble the sweep request (requires config.sweep.present).
SweepConfig sweep_from(const ProjectConfig& config);

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

std::string report_to_json(const SimulationReport& report);
/// Aggregate table: one row per controller.
std::string report_to_csv(const SimulationReport& report);
/// Long table: one row per (controller, realization) windowed cost.
std::string realizations_to_csv(const SimulationReport& report);
/// Long table: one row per (controller, step) violation fraction.
std::string violation_curve_to_csv(const SimulationReport& report);

std::string sweep_report_to_json(const SweepReport& report);
std::string sweep_report_to_csv(const SweepReport& report);

/// Tightening levels of the closed loop for plotting/inspection: gamma with
/// its saturation bound, the no-reset accumulation beta, and the periodic
/// accumulation beta_tilde for `period` (skipped when period == 0).  Computed
/// directly from the levels pipeline, so it works even when the accumulated
/// profiles are design-infeasible (that divergence is the point of the plot).
struct LevelTable {
  Eigen::Index period = 0;
  Eigen::VectorXd gamma_max;          ///< per row
  Eigen::MatrixXd gamma;              ///< rows x steps
  Eigen::MatrixXd beta;               ///< rows x steps
  Eigen::MatrixXd beta_tilde;         ///< rows x steps; empty if period == 0
};

LevelTable tightening_table(const ProjectConfig& config, Eigen::Index period,
                            Eigen::Index steps);
/// Same table from a finished design's stored levels (no re-sampling).
LevelTable tightening_table(const ControllerDesign& design,
                            Eigen::Index period, Eigen::Index steps);
std::string level_table_to_csv(const LevelTable& table);

}  // namespace smpc
