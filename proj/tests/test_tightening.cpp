#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "smpc/errors.hpp"
#include "smpc/polytope.hpp"
#include "smpc/system.hpp"
#include "smpc/tightening.hpp"
#include "test_helpers.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace smpc;

namespace {

/// One-row closed loop with scalar dynamics, handy for closed-form checks.
ClosedLoopDesign scalar_design(double phi, double f = 1.0,
                               double probability = 0.5) {
  ClosedLoopDesign d;
  d.K = MatrixXd::Zero(1, 1);
  d.Phi = MatrixXd::Constant(1, 1, phi);
  d.F_tilde = MatrixXd::Constant(1, 1, f);
  d.probabilities = VectorXd::Constant(1, probability);
  return d;
}

Box symmetric_box(const VectorXd& magnitude) {
  return {-magnitude, magnitude};
}

Box scalar_box(double magnitude) {
  return symmetric_box(VectorXd::Constant(1, magnitude));
}

DisturbanceModel uniform_model(const Box& box) {
  DisturbanceModel model;
  model.kind = DisturbanceKind::UniformBox;
  model.box = box;
  const VectorXd width = box.upper - box.lower;
  model.covariance =
      (width.array().square() / 12.0).matrix().asDiagonal();
  return model;
}

}  // namespace

TEST_SUITE("tightening") {

TEST_CASE("profile kind names round-trip") {
  for (ProfileKind kind : {ProfileKind::Gamma, ProfileKind::A,
                           ProfileKind::Beta, ProfileKind::BetaTilde}) {
    CHECK(profile_kind_from_name(profile_kind_name(kind)) == kind);
  }
  CHECK_THROWS_AS(profile_kind_from_name("delta"), ConfigError);
}

TEST_CASE("profile lookups saturate past the stored prefix") {
  TighteningProfile p;
  p.kind = ProfileKind::Gamma;
  p.prefix.resize(2, 3);
  p.prefix << 0.0, 0.1, 0.2,  //
      0.0, 0.3, 0.5;
  p.saturation.resize(2);
  p.saturation << 0.25, 0.6;

  CHECK(p.value(0, 1) == doctest::Approx(0.1));
  CHECK(p.value(1, 2) == doctest::Approx(0.5));
  CHECK(p.value(0, 3) == doctest::Approx(0.25));
  CHECK(p.value(1, 1000) == doctest::Approx(0.6));
  CHECK(p.column(1)(1) == doctest::Approx(0.3));
  CHECK(p.column(99)(0) == doctest::Approx(0.25));
  CHECK_THROWS_AS(p.value(2, 0), ConfigError);
  CHECK_THROWS_AS(p.value(0, -1), ConfigError);
}

TEST_CASE("one-step worst case: scalar loop decays geometrically") {
  // |F Phi^l D w| <= 0.5^l over w in [-1, 1], attained at w = 1.
  const auto design = scalar_design(0.5);
  const auto a = robust_terms(design, MatrixXd::Identity(1, 1),
                              scalar_box(1.0), 8);
  REQUIRE(a.kind == ProfileKind::A);
  REQUIRE(a.prefix_length() == 8);
  for (int l = 0; l < 8; ++l) {
    CHECK(a.prefix(0, l) == doctest::Approx(std::pow(0.5, l)));
  }
  CHECK(a.saturation(0) >= a.prefix.row(0).maxCoeff());
}

TEST_CASE("one-step worst case vanishes for a zero-width support") {
  const auto design = scalar_design(0.5);
  const auto a = robust_terms(design, MatrixXd::Identity(1, 1),
                              scalar_box(0.0), 5);
  CHECK(a.prefix.cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.saturation(0) == 0.0);
}

TEST_CASE("disturbance support must contain the origin") {
  const auto design = scalar_design(0.5);
  Box shifted;
  shifted.lower = VectorXd::Constant(1, 1.0);
  shifted.upper = VectorXd::Constant(1, 2.0);
  CHECK_THROWS_AS(robust_terms(design, MatrixXd::Identity(1, 1), shifted, 3),
                  ConfigError);
  CHECK_THROWS_AS(
      robust_terms(design, MatrixXd::Identity(1, 1), box_to_polytope(shifted),
                   3),
      ConfigError);
}

TEST_CASE("polytope and box supports agree when the polytope is a box") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 3, q = 2, rows = 4;
    ClosedLoopDesign design;
    design.K = MatrixXd::Zero(1, n);
    design.Phi = random_stable(rng, n, 0.7);
    design.F_tilde = random_matrix(rng, rows, n);
    design.probabilities = VectorXd::Constant(rows, 0.8);
    const MatrixXd D = random_matrix(rng, n, q);
    Box support;
    support.lower = -random_vector(rng, q).cwiseAbs() -
                    VectorXd::Constant(q, 0.1);
    support.upper = random_vector(rng, q).cwiseAbs() +
                    VectorXd::Constant(q, 0.1);

    const auto direct = robust_terms(design, D, support, 6);
    const auto via_lp = robust_terms(design, D, box_to_polytope(support), 6);
    CHECK((direct.prefix - via_lp.prefix).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("one-step worst case on the benchmark plant matches a vertex sweep") {
  const BenchmarkSetup setup;
  const MatrixXd K = lqr_gain(setup.sys, setup.cost);
  const auto design = closed_loop(setup.sys, setup.constraints, K);
  const auto a = robust_terms(design, setup.sys.D, setup.disturbance.box, 20);

  MatrixXd power = MatrixXd::Identity(4, 4);
  for (int l = 0; l < 20; ++l) {
    const VectorXd gain = design.F_tilde * power * setup.sys.D;
    for (int j = 0; j < design.F_tilde.rows(); ++j) {
      const double expected = std::max(gain(j) * -4.0, gain(j) * 4.0);
      CHECK(a.prefix(j, l) == doctest::Approx(expected).epsilon(1e-12));
    }
    power = power * design.Phi;
  }
}

TEST_CASE("discard count: reference values and failure modes") {
  // 10% violation budget at one million samples keeps 9.8642e4 discards.
  CHECK(discard_count(0.9, 1000000, 1e-4) == 98642);

  // Direct evaluation of the bound over a small grid.
  for (double p : {0.6, 0.7, 0.9}) {
    for (long n : {20000L, 100000L}) {
      for (double delta : {1e-3, 1e-6}) {
        const double miss = (1.0 - p) * static_cast<double>(n);
        const double expected =
            std::floor(miss - std::sqrt(2.0 * miss * std::log(1.0 / delta)));
        CHECK(discard_count(p, n, delta) == static_cast<long>(expected));
      }
    }
  }

  CHECK_THROWS_AS(discard_count(0.999, 100, 1e-4), ConfigError);
  CHECK_THROWS_AS(discard_count(1.0, 1000, 1e-4), ConfigError);
  CHECK_THROWS_AS(discard_count(0.0, 1000, 1e-4), ConfigError);
  CHECK_THROWS_AS(discard_count(0.9, 0, 1e-4), ConfigError);
  CHECK_THROWS_AS(discard_count(0.9, 1000, 0.0), ConfigError);
  CHECK_THROWS_AS(discard_count(0.9, 1000, 1.0), ConfigError);
}

TEST_CASE("decay envelope bounds every matrix power") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 4; ++trial) {
    const MatrixXd Phi = random_stable(rng, 3, 0.6 + 0.1 * trial);
    const auto pair = decay_pair(Phi);
    REQUIRE(pair.rate < 1.0);
    MatrixXd power = MatrixXd::Identity(3, 3);
    double scale = 1.0;
    for (int k = 0; k <= 60; ++k) {
      Eigen::JacobiSVD<MatrixXd> svd(power);
      CHECK(svd.singularValues()(0) <= pair.coefficient * scale + 1e-12);
      power = power * Phi;
      scale *= pair.rate;
    }
  }
}

TEST_CASE("decay envelope: defective matrices get the midpoint rate") {
  MatrixXd jordan(2, 2);
  jordan << 0.5, 1.0, 0.0, 0.5;
  const auto pair = decay_pair(jordan);
  CHECK(pair.rate == doctest::Approx(0.75));

  MatrixXd unstable(2, 2);
  unstable << 1.1, 0.0, 0.0, 0.2;
  CHECK_THROWS_AS(decay_pair(unstable), DesignError);
}

TEST_CASE("geometric tail: scalar loop at rate one half") {
  const auto design = scalar_design(0.5);
  const auto tail =
      geometric_tail(design, MatrixXd::Identity(1, 1), scalar_box(1.0));
  CHECK(tail.coefficient(0) == doctest::Approx(1.0).epsilon(1e-3));
  // sum of 0.5^l from l = 10 is 2^-9
  CHECK(tail.bound(0, 10) ==
        doctest::Approx(std::pow(2.0, -9)).epsilon(1e-3));
  CHECK(default_tail_index(tail) == 11);
}

TEST_CASE("geometric tail is exactly zero past a nilpotent power") {
  ClosedLoopDesign design;
  design.K = MatrixXd::Zero(1, 2);
  design.Phi.resize(2, 2);
  design.Phi << 0.0, 1.0, 0.0, 0.0;
  design.F_tilde = MatrixXd::Identity(2, 2);
  design.probabilities = VectorXd::Constant(2, 0.5);
  const auto tail = geometric_tail(design, MatrixXd::Identity(2, 2),
                                   symmetric_box(VectorXd::Ones(2)));
  CHECK(tail.nilpotent_index == 2);
  CHECK(tail.bound(0, 2) == 0.0);
  CHECK(tail.bound(1, 5) == 0.0);
  CHECK(tail.bound(0, 1) > 0.0);
  CHECK(default_tail_index(tail) == 2);
}

TEST_CASE("scenario stage: memoryless scalar error tracks the median") {
  // With Phi = 0 the error equals the last disturbance, so the probability
  // one-half level sits at the median of a centered uniform draw: near zero.
  LinearStochasticSystem sys;
  sys.A = MatrixXd::Zero(1, 1);
  sys.B = MatrixXd::Zero(1, 1);
  sys.D = MatrixXd::Identity(1, 1);
  const auto design = scalar_design(0.0);
  ScenarioConfig scenario;
  scenario.num_samples = 100000;
  scenario.confidence = 0.5;
  scenario.rng_seed = 42;

  const auto gamma =
      stochastic_terms(design, sys, uniform_model(scalar_box(1.0)), 3,
                       scenario);
  CHECK(gamma.prefix(0, 0) == 0.0);
  CHECK(std::abs(gamma.prefix(0, 1)) < 0.02);
  CHECK(std::abs(gamma.prefix(0, 3)) < 0.03);
}

TEST_CASE("scenario stage: probability-one rows accumulate exactly") {
  const BenchmarkSetup setup;
  const MatrixXd K = lqr_gain(setup.sys, setup.cost);
  const auto design = closed_loop(setup.sys, setup.constraints, K);
  ScenarioConfig scenario;
  scenario.num_samples = 2000;
  scenario.rng_seed = 3;

  const int k_bar = 30;
  const auto gamma =
      stochastic_terms(design, setup.sys, setup.disturbance, k_bar, scenario);
  const auto a = robust_terms(design, setup.sys.D, setup.disturbance.box,
                              k_bar);
  // rows 1 and 2 are the hard input rows
  for (int j = 1; j <= 2; ++j) {
    REQUIRE(design.probabilities(j) == 1.0);
    double acc = 0.0;
    for (int k = 1; k <= k_bar; ++k) {
      acc += a.prefix(j, k - 1);
      CHECK(gamma.prefix(j, k) == doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

TEST_CASE("scenario stage: monotone with worst-case-bounded increments") {
  const BenchmarkSetup setup;
  const MatrixXd K = lqr_gain(setup.sys, setup.cost);
  const auto design = closed_loop(setup.sys, setup.constraints, K);
  ScenarioConfig scenario;
  scenario.num_samples = 20000;
  scenario.rng_seed = 9;

  const int k_bar = 40;
  const auto gamma =
      stochastic_terms(design, setup.sys, setup.disturbance, k_bar, scenario);
  const auto a = robust_terms(design, setup.sys.D, setup.disturbance.box,
                              k_bar);
  for (int j = 0; j < gamma.rows(); ++j) {
    CHECK(gamma.prefix(j, 0) == 0.0);
    for (int k = 0; k < k_bar; ++k) {
      CHECK(gamma.prefix(j, k + 1) >= gamma.prefix(j, k));
      CHECK(gamma.prefix(j, k + 1) - gamma.prefix(j, k) <=
            a.prefix(j, k) + 1e-12);
    }
    CHECK(gamma.saturation(j) >= gamma.prefix(j, k_bar));
  }
}

TEST_CASE("scenario stage is deterministic and thread-count independent") {
  const BenchmarkSetup setup;
  const MatrixXd K = lqr_gain(setup.sys, setup.cost);
  const auto design = closed_loop(setup.sys, setup.constraints, K);
  ScenarioConfig scenario;
  scenario.num_samples = 5000;
  scenario.rng_seed = 17;
  scenario.jobs = 1;

  const auto first =
      stochastic_terms(design, setup.sys, setup.disturbance, 10, scenario);
  const auto second =
      stochastic_terms(design, setup.sys, setup.disturbance, 10, scenario);
  scenario.jobs = 3;
  const auto threaded =
      stochastic_terms(design, setup.sys, setup.disturbance, 10, scenario);

  CHECK((first.prefix - second.prefix).cwiseAbs().maxCoeff() == 0.0);
  CHECK((first.prefix - threaded.prefix).cwiseAbs().maxCoeff() == 0.0);
  CHECK((first.saturation - threaded.saturation).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scenario stage rejects designs without satisfaction levels") {
  LinearStochasticSystem sys;
  sys.A = MatrixXd::Zero(1, 1);
  sys.B = MatrixXd::Zero(1, 1);
  sys.D = MatrixXd::Identity(1, 1);
  ClosedLoopDesign design = scalar_design(0.0);
  design.probabilities.resize(0);
  ScenarioConfig scenario;
  CHECK_THROWS_AS(
      stochastic_terms(design, sys, uniform_model(scalar_box(1.0)), 2,
                       scenario),
      ConfigError);
}

TEST_CASE("saturation bound adds the tail at the prefix end") {
  const auto design = scalar_design(0.5);
  const auto tail =
      geometric_tail(design, MatrixXd::Identity(1, 1), scalar_box(1.0));
  TighteningProfile gamma;
  gamma.kind = ProfileKind::Gamma;
  gamma.prefix.resize(1, 11);
  for (int k = 0; k <= 10; ++k) gamma.prefix(0, k) = 0.1 * k;
  gamma.saturation = VectorXd::Constant(1, 1.0);

  const VectorXd bound = saturation_bound(gamma, tail);
  CHECK(bound(0) == doctest::Approx(1.0 + tail.bound(0, 10)));

  TighteningProfile wrong = gamma;
  wrong.kind = ProfileKind::Beta;
  CHECK_THROWS_AS(saturation_bound(wrong, tail), ConfigError);
}

TEST_CASE("no-reset accumulation: hand-worked sum") {
  // gamma_1 = 0.3 and one-step terms 0.5^l give level 0.3 + 0.5 + 0.25 at
  // index three.
  const auto design = scalar_design(0.5);
  const auto a = robust_terms(design, MatrixXd::Identity(1, 1),
                              scalar_box(1.0), 6);
  const auto tail =
      geometric_tail(design, MatrixXd::Identity(1, 1), scalar_box(1.0));
  TighteningProfile gamma;
  gamma.kind = ProfileKind::Gamma;
  gamma.prefix = MatrixXd::Zero(1, 6);
  gamma.prefix(0, 1) = 0.3;
  for (int k = 2; k <= 5; ++k) gamma.prefix(0, k) = 0.3;
  gamma.saturation = VectorXd::Constant(1, 0.3);

  const auto beta = rs_profile(gamma, a, tail);
  CHECK(beta.kind == ProfileKind::Beta);
  CHECK(beta.prefix(0, 0) == 0.0);
  CHECK(beta.prefix(0, 1) == doctest::Approx(0.3));
  CHECK(beta.prefix(0, 2) == doctest::Approx(0.8));
  CHECK(beta.prefix(0, 3) == doctest::Approx(1.05));
  CHECK(beta.saturation(0) >= beta.prefix(0, 5));
}

TEST_CASE("single-step reset profile equals the no-reset profile") {
  const BenchmarkSetup setup;
  const MatrixXd K = lqr_gain(setup.sys, setup.cost);
  const auto design = closed_loop(setup.sys, setup.constraints, K);
  ScenarioConfig scenario;
  scenario.num_samples = 5000;
  scenario.rng_seed = 5;

  const int k_bar = 25;
  const auto gamma =
      stochastic_terms(design, setup.sys, setup.disturbance, k_bar, scenario);
  const auto a = robust_terms(design, setup.sys.D, setup.disturbance.box,
                              k_bar);
  const auto tail =
      geometric_tail(design, setup.sys.D, setup.disturbance.box);

  const auto beta = rs_profile(gamma, a, tail);
  const auto beta_tilde = ms_profile(gamma, a, 1, tail);
  CHECK((beta.prefix - beta_tilde.prefix).cwiseAbs().maxCoeff() == 0.0);
  CHECK((beta.saturation - beta_tilde.saturation).cwiseAbs().maxCoeff() ==
        0.0);
}

TEST_CASE("reset period beyond the prefix reproduces the per-step levels") {
  const BenchmarkSetup setup;
  const MatrixXd K = lqr_gain(setup.sys, setup.cost);
  const auto design = closed_loop(setup.sys, setup.constraints, K);
  ScenarioConfig scenario;
  scenario.num_samples = 5000;
  scenario.rng_seed = 5;

  const int k_bar = 15;
  const auto gamma =
      stochastic_terms(design, setup.sys, setup.disturbance, k_bar, scenario);
  const auto a = robust_terms(design, setup.sys.D, setup.disturbance.box,
                              k_bar);
  const auto tail =
      geometric_tail(design, setup.sys.D, setup.disturbance.box);

  const auto beta_tilde = ms_profile(gamma, a, 100, tail);
  CHECK((beta_tilde.prefix - gamma.prefix).cwiseAbs().maxCoeff() == 0.0);
  for (int j = 0; j < gamma.rows(); ++j) {
    CHECK(beta_tilde.saturation(j) >= gamma.saturation(j));
  }

  // Interleaving: the reset profile never exceeds the no-reset profile.
  const auto beta = rs_profile(gamma, a, tail);
  for (int period : {1, 3, 7}) {
    const auto mid = ms_profile(gamma, a, period, tail);
    for (int j = 0; j < gamma.rows(); ++j) {
      for (int k = 0; k <= k_bar; ++k) {
        CHECK(gamma.prefix(j, k) <= mid.prefix(j, k) + 1e-12);
        CHECK(mid.prefix(j, k) <= beta.prefix(j, k) + 1e-12);
      }
    }
  }
}

TEST_CASE("feasibility report flags saturated rows") {
  TighteningProfile p;
  p.kind = ProfileKind::Beta;
  p.prefix = MatrixXd::Zero(2, 3);
  p.saturation.resize(2);
  p.saturation << 0.9, 0.4;
  const auto ok = design_feasibility(p);
  CHECK(ok.feasible);
  CHECK(ok.slack(0) == doctest::Approx(0.1));

  p.saturation << 0.5, 1.2;
  const auto bad = design_feasibility(p);
  CHECK_FALSE(bad.feasible);
  CHECK(bad.slack(1) < 0.0);
}

TEST_CASE("tube-gain tuning returns the range minimum when noise vanishes") {
  BenchmarkSetup setup;
  setup.disturbance.box.lower.setZero();
  setup.disturbance.box.upper.setZero();
  setup.disturbance.covariance.setZero();
  ScenarioConfig scenario;
  scenario.num_samples = 200;
  scenario.rng_seed = 1;

  const auto result =
      tune_tube_gain(setup.sys, setup.constraints, setup.cost,
                     setup.disturbance, ProfileKind::Beta, 1, 0.5, 2.0, 50.0,
                     scenario);
  CHECK(result.q11 == doctest::Approx(2.0));
  CHECK(result.saturation == doctest::Approx(0.0));
}

TEST_CASE("tube-gain tuning meets the target on the benchmark plant") {
  const BenchmarkSetup setup;
  ScenarioConfig scenario;
  scenario.num_samples = 4000;
  scenario.rng_seed = 8;

  const auto beta_result =
      tune_tube_gain(setup.sys, setup.constraints, setup.cost,
                     setup.disturbance, ProfileKind::Beta, 1, 0.9, 1.0,
                     5000.0, scenario);
  CHECK(beta_result.saturation <= 0.9 + 1e-9);
  CHECK(beta_result.saturation > 0.7);
  CHECK(beta_result.q11 > 100.0);
  CHECK(beta_result.q11 < 5000.0);
  // the tuned gain closes the loop stably
  CHECK(spectral_radius(setup.sys.A + setup.sys.B * beta_result.K) < 1.0);

  const auto ms_result =
      tune_tube_gain(setup.sys, setup.constraints, setup.cost,
                     setup.disturbance, ProfileKind::BetaTilde, 5, 0.9, 0.1,
                     5000.0, scenario);
  CHECK(ms_result.saturation <= 0.9 + 1e-9);
  CHECK(ms_result.q11 < beta_result.q11);  // resets tolerate a weaker gain

  CHECK_THROWS_AS(
      tune_tube_gain(setup.sys, setup.constraints, setup.cost,
                     setup.disturbance, ProfileKind::Beta, 1, 0.9, 0.5, 2.0,
                     scenario),
      DesignError);
}

TEST_CASE("benchmark design lands in the expected saturation bands") {
  const BenchmarkSetup setup;
  const MatrixXd K = lqr_gain(setup.sys, setup.cost);
  const auto design = closed_loop(setup.sys, setup.constraints, K);
  const auto tail =
      geometric_tail(design, setup.sys.D, setup.disturbance.box);
  const auto k_bar = default_tail_index(tail);
  CHECK(k_bar > 50);
  CHECK(k_bar < 500);

  ScenarioConfig scenario;
  scenario.num_samples = 20000;
  scenario.rng_seed = 12;
  const auto gamma =
      stochastic_terms(design, setup.sys, setup.disturbance, k_bar, scenario);
  // chance row saturates noticeably below its bound, input rows far below
  CHECK(gamma.saturation(0) > 0.6);
  CHECK(gamma.saturation(0) < 1.1);
  CHECK(design_feasibility(gamma).feasible);

  // without resets the accumulated terms blow far past feasibility
  const auto a = robust_terms(design, setup.sys.D, setup.disturbance.box,
                              k_bar);
  const auto beta = rs_profile(gamma, a, tail);
  CHECK_FALSE(design_feasibility(beta).feasible);
  CHECK(beta.saturation(0) > 10.0);
}

}  // TEST_SUITE
