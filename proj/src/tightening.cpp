#include "smpc/tightening.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>
#include <vector>

#include "smpc/errors.hpp"
#include "smpc/lp.hpp"
#include "smpc/parallel.hpp"
#include "smpc/rng.hpp"

namespace smpc {

namespace {

/// Largest singular value; zero for the zero matrix.
double operator_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
}

void require_zero_in_box(const Box& support) {
  if (support.lower.size() != support.upper.size()) {
    throw ConfigError("disturbance support: box bounds disagree in size");
  }
  for (Eigen::Index i = 0; i < support.lower.size(); ++i) {
    if (support.lower(i) > 0.0 || support.upper(i) < 0.0) {
      std::ostringstream msg;
      msg << "disturbance support must contain the origin (coordinate " << i
          << " spans [" << support.lower(i) << ", " << support.upper(i)
          << "])";
      throw ConfigError(msg.str());
    }
  }
}

/// Upper bound on max_{w in W} ||D w||_2 over a box support.  Exact (vertex
/// sweep) for small disturbance dimensions, coordinatewise over-approximation
/// otherwise.
double max_dw_norm(const Eigen::MatrixXd& D, const Box& support) {
  const Eigen::Index q = support.lower.size();
  if (D.cols() != q) {
    throw ConfigError(
        "disturbance support dimension does not match the disturbance input "
        "matrix");
  }
  if (q <= 12) {
    double best = 0.0;
    Eigen::VectorXd w(q);
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << q); ++mask) {
      for (Eigen::Index i = 0; i < q; ++i) {
        w(i) = (mask >> i) & 1 ? support.upper(i) : support.lower(i);
      }
      best = std::max(best, (D * w).norm());
    }
    return best;
  }
  Eigen::VectorXd m(D.rows());
  for (Eigen::Index i = 0; i < D.rows(); ++i) {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < q; ++j) {
      worst += std::max(D(i, j) * support.lower(j), D(i, j) * support.upper(j));
    }
    // the row and its negation are symmetric bounds on |(Dw)_i|
    double worst_neg = 0.0;
    for (Eigen::Index j = 0; j < q; ++j) {
      worst_neg +=
          std::max(-D(i, j) * support.lower(j), -D(i, j) * support.upper(j));
    }
    m(i) = std::max(worst, worst_neg);
  }
  return m.norm();
}

/// Same bound over a polytopic support via per-coordinate linear programs.
double max_dw_norm(const Eigen::MatrixXd& D, const Polytope& support) {
  Eigen::VectorXd m(D.rows());
  for (Eigen::Index i = 0; i < D.rows(); ++i) {
    double worst = 0.0;
    for (int sign : {+1, -1}) {
      const Eigen::VectorXd c = sign * D.row(i).transpose();
      const LpResult lp = maximize_linear(c, support.H, support.b);
      if (lp.status == LpStatus::Unbounded) {
        throw DesignError("disturbance support must be bounded");
      }
      if (lp.status == LpStatus::Infeasible) {
        throw ConfigError("disturbance support is empty");
      }
      worst = std::max(worst, lp.value);
    }
    m(i) = worst;
  }
  return m.norm();
}

void check_profile_pair(const TighteningProfile& gamma,
                        const TighteningProfile& a, const char* caller) {
  std::ostringstream msg;
  if (gamma.kind != ProfileKind::Gamma) {
    msg << caller << ": first argument must be a gamma profile";
    throw ConfigError(msg.str());
  }
  if (a.kind != ProfileKind::A) {
    msg << caller << ": second argument must hold the worst-case one-step "
                     "terms";
    throw ConfigError(msg.str());
  }
  if (gamma.rows() != a.rows()) {
    msg << caller << ": profiles disagree on the number of constraint rows ("
        << gamma.rows() << " vs " << a.rows() << ")";
    throw ConfigError(msg.str());
  }
  if (gamma.prefix_length() < 2) {
    msg << caller << ": gamma prefix must cover at least indices 0 and 1";
    throw ConfigError(msg.str());
  }
}

}  // namespace

std::string profile_kind_name(ProfileKind kind) {
  switch (kind) {
    case ProfileKind::Gamma:
      return "gamma";
    case ProfileKind::A:
      return "a";
    case ProfileKind::Beta:
      return "beta";
    case ProfileKind::BetaTilde:
      return "beta_tilde";
  }
  throw ConfigError("unknown profile kind");
}

ProfileKind profile_kind_from_name(const std::string& name) {
  if (name == "gamma") return ProfileKind::Gamma;
  if (name == "a") return ProfileKind::A;
  if (name == "beta") return ProfileKind::Beta;
  if (name == "beta_tilde") return ProfileKind::BetaTilde;
  throw ConfigError("unknown profile kind '" + name + "'");
}

double TighteningProfile::value(Eigen::Index row, Eigen::Index index) const {
  if (row < 0 || row >= rows()) {
    std::ostringstream msg;
    msg << "profile row " << row << " out of range [0, " << rows() << ")";
    throw ConfigError(msg.str());
  }
  if (index < 0) {
    throw ConfigError("profile index must be nonnegative");
  }
  return index < prefix_length() ? prefix(row, index) : saturation(row);
}

Eigen::VectorXd TighteningProfile::column(Eigen::Index index) const {
  if (index < 0) {
    throw ConfigError("profile index must be nonnegative");
  }
  return index < prefix_length() ? prefix.col(index).eval() : saturation;
}

double GeometricTail::bound(Eigen::Index row, Eigen::Index from) const {
  if (nilpotent_index >= 0 && from >= nilpotent_index) return 0.0;
  return coefficient(row) * std::pow(rate, static_cast<double>(from)) /
         (1.0 - rate);
}

double GeometricTail::term_bound(Eigen::Index row, Eigen::Index from) const {
  if (nilpotent_index >= 0 && from >= nilpotent_index) return 0.0;
  return coefficient(row) * std::pow(rate, static_cast<double>(from));
}

DecayPair decay_pair(const Eigen::MatrixXd& Phi) {
  if (Phi.rows() == 0 || Phi.rows() != Phi.cols()) {
    throw ConfigError("decay pair requires a square, nonempty matrix");
  }
  const double sr = spectral_radius(Phi);
  if (sr >= 1.0) {
    std::ostringstream msg;
    msg << "decay pair requires a stable matrix (spectral radius " << sr
        << ")";
    throw DesignError(msg.str());
  }
  Eigen::EigenSolver<Eigen::MatrixXd> es(Phi);
  if (es.info() != Eigen::Success) {
    throw NumericalError("eigendecomposition failed while fitting the decay "
                         "envelope");
  }
  // A well-conditioned eigenvector basis marks the matrix as diagonalizable;
  // then any rate just above the spectral radius admits a finite envelope.
  // Defective matrices get the safe midpoint rate instead.
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(es.eigenvectors());
  const double smax = svd.singularValues().maxCoeff();
  const double smin = svd.singularValues().minCoeff();
  const bool diagonalizable = smax > 0.0 && smin / smax > 1e-8;
  const double rho = diagonalizable
                         ? std::min(sr + 1e-6, 0.5 * (1.0 + sr))
                         : 0.5 * (1.0 + sr);

  double coefficient = 1.0;  // the k = 0 power contributes exactly one
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(Phi.rows(), Phi.cols());
  double scale = 1.0;
  for (int k = 1; k <= 200; ++k) {
    power = power * Phi;
    scale *= rho;
    const double norm = operator_norm(power);
    if (norm == 0.0) break;          // nilpotent: all later powers vanish
    if (scale < 1e-300) break;       // rate underflow; earlier terms dominate
    coefficient = std::max(coefficient, norm / scale);
  }
  return {coefficient, rho};
}

GeometricTail geometric_tail(const ClosedLoopDesign& design,
                             const Eigen::MatrixXd& D, const Box& support) {
  const DecayPair pair = decay_pair(design.Phi);
  const double reach = max_dw_norm(D, support);
  GeometricTail tail;
  tail.rate = pair.rate;
  tail.coefficient.resize(design.F_tilde.rows());
  for (Eigen::Index j = 0; j < design.F_tilde.rows(); ++j) {
    tail.coefficient(j) =
        design.F_tilde.row(j).norm() * reach * pair.coefficient;
  }
  // Cayley-Hamilton caps the nilpotency index at the dimension.
  Eigen::MatrixXd power = design.Phi;
  for (Eigen::Index k = 1; k <= design.Phi.rows(); ++k) {
    if (power.cwiseAbs().maxCoeff() == 0.0) {
      tail.nilpotent_index = static_cast<int>(k);
      break;
    }
    power = power * design.Phi;
  }
  return tail;
}

Eigen::Index default_tail_index(const GeometricTail& tail) {
  constexpr double kThreshold = 1e-3;
  constexpr Eigen::Index kCap = 500;
  for (Eigen::Index k = 1; k <= kCap; ++k) {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < tail.coefficient.size(); ++j) {
      worst = std::max(worst, tail.bound(j, k));
    }
    if (worst < kThreshold) return k;
  }
  return kCap;
}

TighteningProfile robust_terms(const ClosedLoopDesign& design,
                               const Eigen::MatrixXd& D, const Box& support,
                               Eigen::Index length) {
  if (length < 1) {
    throw ConfigError("worst-case terms need at least one index");
  }
  require_zero_in_box(support);
  if (D.cols() != support.lower.size()) {
    throw ConfigError(
        "disturbance support dimension does not match the disturbance input "
        "matrix");
  }
  if (D.rows() != design.Phi.rows()) {
    throw ConfigError(
        "disturbance input matrix does not match the state dimension");
  }
  const Eigen::Index r = design.F_tilde.rows();
  TighteningProfile profile;
  profile.kind = ProfileKind::A;
  profile.prefix.resize(r, length);
  Eigen::MatrixXd power =
      Eigen::MatrixXd::Identity(design.Phi.rows(), design.Phi.cols());
  for (Eigen::Index l = 0; l < length; ++l) {
    const Eigen::MatrixXd gain = design.F_tilde * power * D;  // r x q
    for (Eigen::Index j = 0; j < r; ++j) {
      double worst = 0.0;
      for (Eigen::Index c = 0; c < gain.cols(); ++c) {
        worst += std::max(gain(j, c) * support.lower(c),
                          gain(j, c) * support.upper(c));
      }
      profile.prefix(j, l) = worst;
    }
    power = power * design.Phi;
  }
  // Every term past the prefix decays geometrically; combine that bound with
  // the prefix maximum so lookups beyond the prefix stay valid.
  const GeometricTail tail = geometric_tail(design, D, support);
  profile.saturation.resize(r);
  for (Eigen::Index j = 0; j < r; ++j) {
    profile.saturation(j) = std::max(profile.prefix.row(j).maxCoeff(),
                                     tail.term_bound(j, length));
  }
  return profile;
}

TighteningProfile robust_terms(const ClosedLoopDesign& design,
                               const Eigen::MatrixXd& D,
                               const Polytope& support, Eigen::Index length) {
  if (length < 1) {
    throw ConfigError("worst-case terms need at least one index");
  }
  if (support.empty) {
    throw ConfigError("disturbance support is empty");
  }
  if (!contains(support, Eigen::VectorXd::Zero(support.dim()))) {
    throw ConfigError("disturbance support must contain the origin");
  }
  if (D.cols() != support.dim()) {
    throw ConfigError(
        "disturbance support dimension does not match the disturbance input "
        "matrix");
  }
  const Eigen::Index r = design.F_tilde.rows();
  TighteningProfile profile;
  profile.kind = ProfileKind::A;
  profile.prefix.resize(r, length);
  Eigen::MatrixXd power =
      Eigen::MatrixXd::Identity(design.Phi.rows(), design.Phi.cols());
  for (Eigen::Index l = 0; l < length; ++l) {
    const Eigen::MatrixXd gain = design.F_tilde * power * D;
    for (Eigen::Index j = 0; j < r; ++j) {
      const LpResult lp =
          maximize_linear(gain.row(j).transpose(), support.H, support.b);
      if (lp.status == LpStatus::Unbounded) {
        throw DesignError("disturbance support must be bounded");
      }
      if (lp.status == LpStatus::Infeasible) {
        throw ConfigError("disturbance support is empty");
      }
      profile.prefix(j, l) = lp.value;
    }
    power = power * design.Phi;
  }
  const DecayPair pair = decay_pair(design.Phi);
  const double reach = max_dw_norm(D, support);
  profile.saturation.resize(r);
  for (Eigen::Index j = 0; j < r; ++j) {
    const double tail_term = design.F_tilde.row(j).norm() * reach *
                             pair.coefficient *
                             std::pow(pair.rate, static_cast<double>(length));
    profile.saturation(j) =
        std::max(profile.prefix.row(j).maxCoeff(), tail_term);
  }
  return profile;
}

long discard_count(double probability, long num_samples, double delta) {
  if (!(probability > 0.0 && probability < 1.0)) {
    throw ConfigError(
        "discard count is defined for probability levels strictly between 0 "
        "and 1");
  }
  if (num_samples < 1) {
    throw ConfigError("discard count needs at least one sample");
  }
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ConfigError("confidence parameter must lie strictly between 0 and 1");
  }
  const double miss = (1.0 - probability) * static_cast<double>(num_samples);
  const double bound = miss - std::sqrt(2.0 * miss * std::log(1.0 / delta));
  if (bound < 0.0) {
    std::ostringstream msg;
    msg << "sample count " << num_samples
        << " is too small for probability level " << probability
        << " at confidence " << delta << "; increase the sample count";
    throw ConfigError(msg.str());
  }
  return static_cast<long>(std::floor(bound));
}

TighteningProfile stochastic_terms(const ClosedLoopDesign& design,
                                   const LinearStochasticSystem& sys,
                                   const DisturbanceModel& disturbance,
                                   Eigen::Index k_bar,
                                   const ScenarioConfig& scenario) {
  if (k_bar < 1) {
    throw ConfigError("tightening prefix must cover at least index 1");
  }
  if (scenario.num_samples < 1) {
    throw ConfigError("scenario stage needs at least one sample");
  }
  const Eigen::Index n = sys.A.rows();
  const Eigen::Index r = design.F_tilde.rows();
  if (design.F_tilde.cols() != n || design.Phi.rows() != n) {
    throw ConfigError(
        "closed-loop design does not match the system state dimension");
  }
  if (design.probabilities.size() != r) {
    throw ConfigError(
        "closed-loop design is missing per-row satisfaction levels");
  }

  const TighteningProfile a =
      robust_terms(design, sys.D, disturbance.box, k_bar);

  // Chance rows draw their levels from sampled error trajectories; rows
  // required with probability one use the exact worst-case accumulation.
  std::vector<Eigen::Index> chance_rows;
  std::vector<long> discard;
  for (Eigen::Index j = 0; j < r; ++j) {
    const double p = design.probabilities(j);
    if (p < 1.0) {
      chance_rows.push_back(j);
      discard.push_back(
          discard_count(p, scenario.num_samples, scenario.confidence));
    }
  }

  TighteningProfile profile;
  profile.kind = ProfileKind::Gamma;
  profile.prefix = Eigen::MatrixXd::Zero(r, k_bar + 1);

  if (!chance_rows.empty()) {
    const long num_samples = scenario.num_samples;
    const Eigen::Index nc = static_cast<Eigen::Index>(chance_rows.size());
    Eigen::MatrixXd chance_gains(nc, n);
    for (Eigen::Index c = 0; c < nc; ++c) {
      chance_gains.row(c) = design.F_tilde.row(chance_rows[c]);
    }

    const DisturbanceSampler sampler(disturbance);
    std::vector<RandomStream> streams;
    streams.reserve(num_samples);
    for (long i = 0; i < num_samples; ++i) {
      streams.emplace_back(child_seed(scenario.rng_seed, i));
    }
    Eigen::MatrixXd errors = Eigen::MatrixXd::Zero(n, num_samples);
    Eigen::MatrixXd values(num_samples, nc);

    for (Eigen::Index k = 1; k <= k_bar; ++k) {
      parallel_for(num_samples, scenario.jobs, [&](long begin, long end) {
        Eigen::VectorXd w(sys.D.cols());
        Eigen::VectorXd next(n);
        for (long i = begin; i < end; ++i) {
          sampler.draw(streams[i], w);
          next.noalias() = design.Phi * errors.col(i);
          next.noalias() += sys.D * w;
          errors.col(i) = next;
        }
        values.middleRows(begin, end - begin).noalias() =
            (chance_gains * errors.middleCols(begin, end - begin)).transpose();
      });
      for (Eigen::Index c = 0; c < nc; ++c) {
        double* begin = values.col(c).data();
        const long order = num_samples - discard[c] - 1;
        std::nth_element(begin, begin + order, begin + num_samples);
        profile.prefix(chance_rows[c], k) = begin[order];
      }
    }
  }

  for (Eigen::Index j = 0; j < r; ++j) {
    if (design.probabilities(j) >= 1.0) {
      for (Eigen::Index k = 1; k <= k_bar; ++k) {
        profile.prefix(j, k) = profile.prefix(j, k - 1) + a.prefix(j, k - 1);
      }
    }
  }

  // Sampling noise can break monotonicity; clip each step into the interval
  // [previous, previous + worst-case one-step term].  Both endpoints are
  // valid levels, so the clipped sequence keeps the guarantee while gaining
  // the two structural properties downstream stages rely on.
  for (Eigen::Index j = 0; j < r; ++j) {
    for (Eigen::Index k = 0; k < k_bar; ++k) {
      double next = profile.prefix(j, k + 1);
      next = std::min(next, profile.prefix(j, k) + a.prefix(j, k));
      next = std::max(next, profile.prefix(j, k));
      profile.prefix(j, k + 1) = next;
    }
  }

  const GeometricTail tail = geometric_tail(design, sys.D, disturbance.box);
  profile.saturation.resize(r);
  for (Eigen::Index j = 0; j < r; ++j) {
    profile.saturation(j) = profile.prefix(j, k_bar) + tail.bound(j, k_bar);
  }
  return profile;
}

Eigen::VectorXd saturation_bound(const TighteningProfile& gamma,
                                 const GeometricTail& tail) {
  if (gamma.kind != ProfileKind::Gamma) {
    throw ConfigError("saturation bound expects a gamma profile");
  }
  if (tail.coefficient.size() != gamma.rows()) {
    throw ConfigError(
        "tail coefficients disagree with the profile row count");
  }
  const Eigen::Index last = gamma.prefix_length() - 1;
  Eigen::VectorXd bound(gamma.rows());
  for (Eigen::Index j = 0; j < gamma.rows(); ++j) {
    bound(j) = gamma.prefix(j, last) + tail.bound(j, last);
  }
  return bound;
}

TighteningProfile rs_profile(const TighteningProfile& gamma,
                             const TighteningProfile& a,
                             const GeometricTail& tail) {
  check_profile_pair(gamma, a, "rs_profile");
  const Eigen::Index r = gamma.rows();
  const Eigen::Index length = gamma.prefix_length();
  TighteningProfile profile;
  profile.kind = ProfileKind::Beta;
  profile.prefix.resize(r, length);
  profile.prefix.col(0).setZero();
  profile.prefix.col(1) = gamma.prefix.col(1);
  for (Eigen::Index i = 2; i < length; ++i) {
    for (Eigen::Index j = 0; j < r; ++j) {
      profile.prefix(j, i) = profile.prefix(j, i - 1) + a.value(j, i - 1);
    }
  }
  profile.saturation.resize(r);
  for (Eigen::Index j = 0; j < r; ++j) {
    profile.saturation(j) =
        profile.prefix(j, length - 1) + tail.bound(j, length - 1);
  }
  return profile;
}

TighteningProfile ms_profile(const TighteningProfile& gamma,
                             const TighteningProfile& a, Eigen::Index period,
                             const GeometricTail& tail) {
  check_profile_pair(gamma, a, "ms_profile");
  if (period < 1) {
    throw ConfigError("reset period must be at least 1");
  }
  const Eigen::Index r = gamma.rows();
  const Eigen::Index length = gamma.prefix_length();
  TighteningProfile profile;
  profile.kind = ProfileKind::BetaTilde;
  profile.prefix.resize(r, length);
  profile.prefix.col(0).setZero();
  for (Eigen::Index i = 1; i < length; ++i) {
    if (i <= period) {
      profile.prefix.col(i) = gamma.prefix.col(i);
    } else {
      for (Eigen::Index j = 0; j < r; ++j) {
        profile.prefix(j, i) = profile.prefix(j, i - 1) + a.value(j, i - 1);
      }
    }
  }
  profile.saturation.resize(r);
  if (period > length - 1) {
    // The prefix never leaves the gamma regime; growth only starts at the
    // period, so the tail is anchored there.
    for (Eigen::Index j = 0; j < r; ++j) {
      profile.saturation(j) = gamma.saturation(j) + tail.bound(j, period);
    }
  } else {
    for (Eigen::Index j = 0; j < r; ++j) {
      profile.saturation(j) =
          profile.prefix(j, length - 1) + tail.bound(j, length - 1);
    }
  }
  return profile;
}

FeasibilityReport design_feasibility(const TighteningProfile& profile) {
  FeasibilityReport report;
  report.slack = Eigen::VectorXd::Ones(profile.rows()) - profile.saturation;
  report.feasible = profile.rows() > 0 && (report.slack.array() > 0.0).all();
  return report;
}

TubeGainResult tune_tube_gain(const LinearStochasticSystem& sys,
                              const MixedConstraints& constraints,
                              const CostSpec& cost,
                              const DisturbanceModel& disturbance,
                              ProfileKind kind, Eigen::Index period,
                              double target, double q11_lo, double q11_hi,
                              const ScenarioConfig& scenario) {
  if (kind == ProfileKind::A) {
    throw ConfigError("tube-gain tuning targets gamma, beta or beta_tilde");
  }
  if (constraints.num_state_rows < 1) {
    throw ConfigError("tube-gain tuning needs at least one state row");
  }
  if (!(target > 0.0 && target < 1.0)) {
    throw ConfigError("tuning target must lie strictly between 0 and 1");
  }
  if (!(q11_lo >= 0.0 && q11_hi > q11_lo)) {
    throw ConfigError("tuning range must satisfy 0 <= q11_lo < q11_hi");
  }
  if (kind == ProfileKind::BetaTilde && period < 1) {
    throw ConfigError("reset period must be at least 1");
  }
  const Eigen::Index n = sys.A.rows();
  const Eigen::Index num_state = constraints.num_state_rows;

  // Largest state-row saturation of the requested profile kind under the LQR
  // gain for first-state weight q11.  The scenario seed is shared across
  // candidates, so the search sees a deterministic, smooth objective.
  auto evaluate = [&](double q11) -> std::pair<Eigen::MatrixXd, double> {
    CostSpec tuned = cost;
    if (tuned.Q.rows() != n || tuned.Q.cols() != n) {
      tuned.Q = Eigen::MatrixXd::Zero(n, n);
    }
    tuned.Q(0, 0) = q11;
    const Eigen::MatrixXd K = lqr_gain(sys, tuned);
    const ClosedLoopDesign design = closed_loop(sys, constraints, K);
    const GeometricTail tail = geometric_tail(design, sys.D, disturbance.box);
    const Eigen::Index k_full = default_tail_index(tail);
    const TighteningProfile a =
        robust_terms(design, sys.D, disturbance.box, k_full);
    Eigen::Index k_eval = k_full;
    if (kind == ProfileKind::Beta) k_eval = 1;
    if (kind == ProfileKind::BetaTilde) k_eval = std::min(period, k_full);
    const TighteningProfile gamma =
        stochastic_terms(design, sys, disturbance, k_eval, scenario);

    double worst = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < num_state; ++j) {
      double sat = 0.0;
      switch (kind) {
        case ProfileKind::Gamma:
          sat = gamma.saturation(j);
          break;
        case ProfileKind::Beta: {
          sat = gamma.prefix(j, 1);
          for (Eigen::Index l = 1; l < k_full; ++l) sat += a.prefix(j, l);
          sat += tail.bound(j, k_full);
          break;
        }
        case ProfileKind::BetaTilde: {
          if (period > k_full) {
            sat = gamma.saturation(j) + tail.bound(j, period);
          } else {
            sat = gamma.prefix(j, period);
            for (Eigen::Index l = period; l < k_full; ++l)
              sat += a.prefix(j, l);
            sat += tail.bound(j, k_full);
          }
          break;
        }
        case ProfileKind::A:
          break;  // rejected above
      }
      worst = std::max(worst, sat);
    }
    return {K, worst};
  };

  auto [gain_lo, sat_lo] = evaluate(q11_lo);
  if (sat_lo <= target) {
    return {gain_lo, q11_lo, sat_lo};
  }
  auto [gain_hi, sat_hi] = evaluate(q11_hi);
  if (sat_hi > target) {
    std::ostringstream msg;
    msg << "tube-gain tuning cannot reach saturation " << target
        << " within q11 range [" << q11_lo << ", " << q11_hi
        << "] (best achieved " << sat_hi << "); widen the range or relax the "
        << "target";
    throw DesignError(msg.str());
  }

  double lo = q11_lo;
  double hi = q11_hi;
  Eigen::MatrixXd best_gain = gain_hi;
  double best_q11 = q11_hi;
  double best_sat = sat_hi;
  for (int it = 0; it < 60 && hi - lo > 1e-4 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    auto [gain_mid, sat_mid] = evaluate(mid);
    if (sat_mid <= target) {
      hi = mid;
      best_gain = gain_mid;
      best_q11 = mid;
      best_sat = sat_mid;
      if (sat_mid >= target - 0.02) break;  // inside the acceptance band
    } else {
      lo = mid;
    }
  }
  return {best_gain, best_q11, best_sat};
}

}  // namespace smpc
