#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "smpc/errors.hpp"
#include "smpc/lp.hpp"
#include "smpc/polytope.hpp"
#include "smpc/system.hpp"
#include "smpc/terminal_set.hpp"
#include "smpc/tightening.hpp"
#include "test_helpers.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace smpc;

namespace {

/// Constant-level profile: every lookup returns `level` (prefix of length 1).
TighteningProfile flat_profile(int rows, double level) {
  TighteningProfile p;
  p.kind = ProfileKind::Gamma;
  p.prefix = MatrixXd::Constant(rows, 1, level);
  p.saturation = VectorXd::Constant(rows, level);
  return p;
}

/// True when a is contained in b (every row of b is redundant for a).
bool subset_of(const Polytope& a, const Polytope& b, double tol = 1e-7) {
  for (int j = 0; j < b.rows(); ++j) {
    const LpResult lp = maximize_linear(b.H.row(j).transpose(), a.H, a.b);
    if (lp.status == LpStatus::Infeasible) return true;  // empty a
    if (lp.status == LpStatus::Unbounded) return false;
    if (lp.value > b.b(j) + tol) return false;
  }
  return true;
}

ClosedLoopDesign plain_design(const MatrixXd& Phi, const MatrixXd& F_tilde) {
  ClosedLoopDesign d;
  d.K = MatrixXd::Zero(1, Phi.cols());
  d.Phi = Phi;
  d.F_tilde = F_tilde;
  d.probabilities = VectorXd::Constant(F_tilde.rows(), 1.0);
  return d;
}

}  // namespace

TEST_SUITE("terminal_set") {

TEST_CASE("deadbeat loop determines at depth zero") {
  const auto design =
      plain_design(MatrixXd::Zero(2, 2), MatrixXd::Identity(2, 2));
  const auto set = build_terminal_set(design, flat_profile(2, 0.0), 0);

  CHECK_FALSE(set.empty);
  CHECK(set.determination_index == 0);
  CHECK(contains(set, Eigen::Vector2d(0.9, 0.9)));
  CHECK_FALSE(contains(set, Eigen::Vector2d(1.1, 0.0)));
}

TEST_CASE("scalar contraction keeps only the first layer") {
  const auto design = plain_design(MatrixXd::Constant(1, 1, 0.5),
                                   MatrixXd::Constant(1, 1, 1.0));
  const auto set = build_terminal_set(design, flat_profile(1, 0.0), 0);

  CHECK(set.determination_index == 0);
  CHECK(set.rows() == 1);
  CHECK(set.H(0, 0) == doctest::Approx(1.0));
  CHECK(set.b(0) == doctest::Approx(1.0));
  CHECK(contains(set, VectorXd::Constant(1, 0.99)));
  CHECK(contains(set, VectorXd::Constant(1, -100.0)));  // one-sided row
  CHECK_FALSE(contains(set, VectorXd::Constant(1, 1.01)));
}

TEST_CASE("determination waits for the levels to saturate") {
  const auto design = plain_design(MatrixXd::Constant(1, 1, 0.5),
                                   MatrixXd::Constant(1, 1, 1.0));
  TighteningProfile rising;
  rising.kind = ProfileKind::Gamma;
  rising.prefix.resize(1, 6);
  rising.prefix << 0.0, 0.1, 0.2, 0.3, 0.4, 0.5;
  rising.saturation = VectorXd::Constant(1, 0.5);

  const auto set = build_terminal_set(design, rising, 0);
  // redundancy holds long before depth 5, but the level lookups only become
  // constant once the prefix is exhausted
  CHECK(set.determination_index == 5);
  CHECK(contains(set, VectorXd::Constant(1, 0.99)));
  CHECK_FALSE(contains(set, VectorXd::Constant(1, 1.01)));
}

TEST_CASE("the offset anchors the level lookups") {
  const auto design = plain_design(MatrixXd::Constant(1, 1, 0.5),
                                   MatrixXd::Constant(1, 1, 1.0));
  TighteningProfile rising;
  rising.kind = ProfileKind::Gamma;
  rising.prefix.resize(1, 5);
  rising.prefix << 0.0, 0.2, 0.4, 0.6, 0.7;
  rising.saturation = VectorXd::Constant(1, 0.7);

  TighteningProfile shifted;
  shifted.kind = ProfileKind::Gamma;
  shifted.prefix.resize(1, 3);
  for (int k = 0; k < 3; ++k) shifted.prefix(0, k) = rising.value(0, k + 2);
  shifted.saturation = rising.saturation;

  const auto from_offset = build_terminal_set(design, rising, 2);
  const auto from_shift = build_terminal_set(design, shifted, 0);
  CHECK(subset_of(from_offset, from_shift));
  CHECK(subset_of(from_shift, from_offset));
}

TEST_CASE("tighter levels give nested sets") {
  const BenchmarkSetup setup;
  const MatrixXd K = lqr_gain(setup.sys, setup.cost);
  const auto design = closed_loop(setup.sys, setup.constraints, K);

  const auto loose = build_terminal_set(design, flat_profile(3, 0.1), 0);
  const auto tight = build_terminal_set(design, flat_profile(3, 0.4), 0);
  CHECK_FALSE(loose.empty);
  CHECK_FALSE(tight.empty);
  CHECK(subset_of(tight, loose));
  CHECK_FALSE(subset_of(loose, tight));
}

TEST_CASE("every implicit layer is respected, not just the stored ones") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 3; ++trial) {
    const int n = 3;
    ClosedLoopDesign design;
    design.K = MatrixXd::Zero(1, n);
    design.Phi = random_stable(rng, n, 0.7);
    design.F_tilde = random_matrix(rng, 2, n);
    design.probabilities = VectorXd::Constant(2, 1.0);

    // synthetic saturating levels gamma_k = 0.5 (1 - 0.8^k)
    TighteningProfile levels;
    levels.kind = ProfileKind::Gamma;
    levels.prefix.resize(2, 30);
    for (int j = 0; j < 2; ++j) {
      for (int k = 0; k < 30; ++k) {
        levels.prefix(j, k) = 0.5 * (1.0 - std::pow(0.8, k));
      }
    }
    levels.saturation = VectorXd::Constant(2, 0.5);

    const auto set = build_terminal_set(design, levels, 0);
    REQUIRE_FALSE(set.empty);
    CHECK(contains(set, VectorXd::Zero(n)));

    // soundness: layers far past the determination depth stay redundant
    MatrixXd power = MatrixXd::Identity(n, n);
    for (int depth = 0; depth <= set.determination_index + 20; ++depth) {
      const MatrixXd rows = design.F_tilde * power;
      for (int j = 0; j < 2; ++j) {
        const LpResult lp =
            maximize_linear(rows.row(j).transpose(), set.H, set.b);
        if (lp.status == LpStatus::Optimal) {
          CHECK(lp.value <= 1.0 - levels.value(j, depth) + 1e-7);
        }
      }
      power = power * design.Phi;
    }

    // invariance: boundary points map back into the set
    for (int probe = 0; probe < 10; ++probe) {
      const VectorXd direction = random_vector(rng, n);
      const LpResult lp = maximize_linear(direction, set.H, set.b);
      if (lp.status != LpStatus::Optimal) continue;
      CHECK(contains(set, design.Phi * lp.x, 1e-7));
    }
  }
}

TEST_CASE("conflicting levels flag an empty set") {
  MatrixXd F(2, 1);
  F << 1.0, -1.0;
  const auto design = plain_design(MatrixXd::Constant(1, 1, 0.5), F);
  const auto set = build_terminal_set(design, flat_profile(2, 1.2), 0);
  CHECK(set.empty);
}

TEST_CASE("a prefix outlasting the layer cap raises a design error") {
  const auto design = plain_design(MatrixXd::Constant(1, 1, 0.5),
                                   MatrixXd::Constant(1, 1, 1.0));
  TighteningProfile endless;
  endless.kind = ProfileKind::Gamma;
  endless.prefix = MatrixXd::Zero(1, 1200);
  endless.saturation = VectorXd::Zero(1);
  CHECK_THROWS_AS(build_terminal_set(design, endless, 0), DesignError);
}

TEST_CASE("benchmark loop under saturated levels") {
  const BenchmarkSetup setup;
  const MatrixXd K = lqr_gain(setup.sys, setup.cost);
  const auto design = closed_loop(setup.sys, setup.constraints, K);
  // small sample counts inflate the discard margin past feasibility, so use
  // enough samples to keep the saturated level below one
  ScenarioConfig scenario;
  scenario.num_samples = 20000;
  scenario.rng_seed = 4;
  const auto tail =
      geometric_tail(design, setup.sys.D, setup.disturbance.box);
  const auto k_bar = default_tail_index(tail);
  const auto gamma =
      stochastic_terms(design, setup.sys, setup.disturbance, k_bar, scenario);

  // anchoring past the prefix makes every lookup the saturated level
  const auto set = build_terminal_set(design, gamma, gamma.prefix_length());
  REQUIRE_FALSE(set.empty);
  CHECK(contains(set, VectorXd::Zero(4)));

  // invariance at a few boundary points
  std::mt19937_64 rng(33);
  for (int probe = 0; probe < 5; ++probe) {
    const VectorXd direction = random_vector(rng, 4);
    const LpResult lp = maximize_linear(direction, set.H, set.b);
    if (lp.status != LpStatus::Optimal) continue;
    CHECK(contains(set, design.Phi * lp.x, 1e-7));
  }
}

}  // TEST_SUITE
