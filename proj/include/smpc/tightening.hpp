#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "smpc/polytope.hpp"
#include "smpc/system.hpp"

namespace smpc {

/// Which constraint-tightening sequence a profile stores.
enum class ProfileKind { Gamma, A, Beta, BetaTilde };

/// Short lowercase name used in serialized artifacts ("gamma", "a", ...).
std::string profile_kind_name(ProfileKind kind);
ProfileKind profile_kind_from_name(const std::string& name);

/// A per-constraint-row tightening sequence: an explicit prefix of values for
/// indices 0..prefix_length()-1 plus a constant saturation level that upper
/// bounds every later value.  Lookups past the prefix return the saturation
/// level, so callers can index arbitrarily far into the future.
struct TighteningProfile {
  ProfileKind kind = ProfileKind::Gamma;
  /// prefix(j, k) is the value for constraint row j at index k.
  Eigen::MatrixXd prefix;
  /// Per-row constant bound on all values beyond the prefix.
  Eigen::VectorXd saturation;

  Eigen::Index rows() const { return prefix.rows(); }
  Eigen::Index prefix_length() const { return prefix.cols(); }

  /// Value for one row, saturating past the stored prefix.
  double value(Eigen::Index row, Eigen::Index index) const;

  /// All rows at one index, saturating past the stored prefix.
  Eigen::VectorXd column(Eigen::Index index) const;
};

/// Monte-Carlo parameters for the scenario-based tightening stage.
struct ScenarioConfig {
  long num_samples = 100000;
  /// Confidence parameter in (0, 1); smaller values discard fewer samples.
  double confidence = 1e-4;
  std::uint64_t rng_seed = 0;
  /// Worker threads for the sampling sweep (results are thread-count
  /// independent).
  int jobs = 1;
};

/// Geometric envelope ||Phi^k|| <= C * rho^k with rho < 1.
struct DecayPair {
  double coefficient = 1.0;
  double rate = 0.0;
};

/// Per-row geometric tail bound: the contribution of all propagation terms
/// from index `from` onwards is at most coefficient(j) * rate^from / (1-rate).
/// When the system is nilpotent the tail is exactly zero past the nilpotency
/// index and bound() reports that.
struct GeometricTail {
  Eigen::VectorXd coefficient;
  double rate = 0.0;
  /// Smallest k with Phi^k == 0, or -1 when no power vanishes.
  int nilpotent_index = -1;

  /// Upper bound on sum_{l >= from} of row j's propagation term.
  double bound(Eigen::Index row, Eigen::Index from) const;
  /// Upper bound on a single propagation term at index `from` for row j.
  double term_bound(Eigen::Index row, Eigen::Index from) const;
};

/// Per-row design feasibility: a tightening profile leaves room for the
/// constraint only while its saturation level stays below one.
struct FeasibilityReport {
  bool feasible = false;
  /// 1 - saturation per row; negative entries identify the offending rows.
  Eigen::VectorXd slack;
};

/// Result of the tube-gain line search.
struct TubeGainResult {
  Eigen::MatrixXd K;
  double q11 = 0.0;
  /// Largest state-row saturation achieved by the returned gain.
  double saturation = 0.0;
};

/// Fits a geometric envelope ||Phi^k||_2 <= C * rho^k.  rho sits just above
/// the spectral radius (diagonalizable case) or halfway to one (defective
/// case); C is calibrated over the first couple hundred powers.  Requires a
/// stable Phi.
DecayPair decay_pair(const Eigen::MatrixXd& Phi);

/// Per-row tail coefficients c_j = ||row_j(F_tilde)||_2 * max_{w in W} ||Dw||_2 * C
/// packaged with the decay rate, for bounding everything beyond a computed
/// prefix.
GeometricTail geometric_tail(const ClosedLoopDesign& design,
                             const Eigen::MatrixXd& D, const Box& support);

/// Smallest prefix end k with max_j c_j * rho^k / (1 - rho) < 1e-3, capped at
/// 500.  Used as the default horizon for tightening prefixes.
Eigen::Index default_tail_index(const GeometricTail& tail);

/// Worst-case one-step terms a_l(j) = max_{w in W} row_j(F_tilde) Phi^l D w
/// for l = 0..length-1, with W an axis-aligned box (closed form).  The
/// saturation entry is a valid bound for every l past the prefix.
TighteningProfile robust_terms(const ClosedLoopDesign& design,
                               const Eigen::MatrixXd& D, const Box& support,
                               Eigen::Index length);

/// Same terms with a general polytopic disturbance support; each entry solves
/// one small linear program.  Matches the box overload exactly when the
/// polytope is a box.
TighteningProfile robust_terms(const ClosedLoopDesign& design,
                               const Eigen::MatrixXd& D,
                               const Polytope& support, Eigen::Index length);

/// Number of scenario samples that may be discarded while keeping the
/// chance-constraint guarantee at level `probability` with confidence
/// 1 - delta.  Throws ConfigError when the sample count is too small for the
/// requested level.
long discard_count(double probability, long num_samples, double delta);

/// Scenario-based tightening prefix gamma_0..gamma_k_bar.  Rows with
/// probability one use the exact worst-case accumulation; chance rows use the
/// sample-discarding quantile, monotonized a posteriori so that the sequence
/// is nondecreasing and each increment stays below the worst-case one-step
/// term.  The saturation entry adds the geometric tail at k_bar.
TighteningProfile stochastic_terms(const ClosedLoopDesign& design,
                                   const LinearStochasticSystem& sys,
                                   const DisturbanceModel& disturbance,
                                   Eigen::Index k_bar,
                                   const ScenarioConfig& scenario);

/// Saturation levels gamma_max(j) = gamma_k_bar(j) + tail_j(k_bar) for an
/// already-computed gamma prefix.
Eigen::VectorXd saturation_bound(const TighteningProfile& gamma,
                                 const GeometricTail& tail);

/// Tightening sequence for controllers that never reset the nominal state:
/// beta_0 = 0, beta_1 = gamma_1, then beta grows by the worst-case one-step
/// terms.  Saturation adds the tail of the one-step terms past the prefix.
TighteningProfile rs_profile(const TighteningProfile& gamma,
                             const TighteningProfile& a,
                             const GeometricTail& tail);

/// Tightening sequence for controllers that reset the nominal state every
/// `period` steps: follows gamma up to the period, then grows by the
/// worst-case one-step terms.  period >= prefix length reproduces gamma.
TighteningProfile ms_profile(const TighteningProfile& gamma,
                             const TighteningProfile& a, Eigen::Index period,
                             const GeometricTail& tail);

/// Checks that every row's saturation level leaves positive constraint room.
FeasibilityReport design_feasibility(const TighteningProfile& profile);

/// Smallest first-state weight q11 in [q11_lo, q11_hi] whose LQR gain keeps
/// the largest state-row saturation of the requested profile kind at or below
/// `target` (within a 0.02 band).  The per-candidate evaluation reuses the
/// same scenario seed so the search sees a deterministic objective.  Throws
/// DesignError when even q11_hi misses the target.
TubeGainResult tune_tube_gain(const LinearStochasticSystem& sys,
                              const MixedConstraints& constraints,
                              const CostSpec& cost,
                              const DisturbanceModel& disturbance,
                              ProfileKind kind, Eigen::Index period,
                              double target, double q11_lo, double q11_hi,
                              const ScenarioConfig& scenario);

}  // namespace smpc
