#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>

#include "smpc/errors.hpp"
#include "smpc/system.hpp"

namespace smpc {

/// 64-bit finalizer used for seed derivation (splitmix64 mixing function).
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Deterministic seed for an indexed substream.  Distinct (master, index)
/// pairs map to distinct streams with overwhelming probability, so indexed
/// work items can be processed in any order or thread count without changing
/// any drawn value.
inline std::uint64_t child_seed(std::uint64_t master, std::uint64_t index) {
  return mix64(master + 0x9E3779B97F4A7C15ull * (index + 1));
}

/// Small counter-based generator (splitmix64).  16 bytes of state, so
/// millions of independent streams are cheap; all draws are produced by
/// explicit arithmetic to keep results identical across platforms and
/// standard libraries.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix64(state_);
  }

  /// Uniform draw in [0, 1) with 53-bit resolution.
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; the second value of each pair is cached.
  double next_normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    // u1 in (0, 1] so the logarithm is finite.
    const double u1 =
        (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = next_unit();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.141592653589793238462643383279502884 * u2;
    cached_ = radius * std::sin(angle);
    have_cached_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::uint64_t state_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

/// Draws disturbance vectors according to a DisturbanceModel.  Uniform draws
/// fill the support box coordinatewise; truncated-Gaussian draws sample from
/// the parent normal (Cholesky factor of the covariance) and reject anything
/// outside the box.
class DisturbanceSampler {
 public:
  explicit DisturbanceSampler(const DisturbanceModel& model) : model_(model) {
    const auto q = model.box.lower.size();
    if (model.box.upper.size() != q) {
      throw ConfigError("disturbance sampler: box bounds disagree in size");
    }
    if (model.kind == DisturbanceKind::TruncatedGaussian) {
      if (model.covariance.rows() != q || model.covariance.cols() != q) {
        throw ConfigError(
            "disturbance sampler: covariance size does not match the support");
      }
      Eigen::LLT<Eigen::MatrixXd> llt(model.covariance);
      if (llt.info() != Eigen::Success) {
        throw ConfigError(
            "disturbance sampler: covariance must be positive definite for "
            "truncated-Gaussian draws");
      }
      chol_ = llt.matrixL();
    }
  }

  int dim() const { return static_cast<int>(model_.box.lower.size()); }

  void draw(RandomStream& rng, Eigen::VectorXd& w) const {
    const int q = dim();
    w.resize(q);
    if (model_.kind == DisturbanceKind::UniformBox) {
      for (int i = 0; i < q; ++i) {
        w(i) = model_.box.lower(i) +
               (model_.box.upper(i) - model_.box.lower(i)) * rng.next_unit();
      }
      return;
    }
    constexpr int kMaxRejects = 10000;
    Eigen::VectorXd normal(q);
    for (int attempt = 0; attempt < kMaxRejects; ++attempt) {
      for (int i = 0; i < q; ++i) normal(i) = rng.next_normal();
      w.noalias() = chol_ * normal;
      bool inside = true;
      for (int i = 0; i < q; ++i) {
        if (w(i) < model_.box.lower(i) || w(i) > model_.box.upper(i)) {
          inside = false;
          break;
        }
      }
      if (inside) return;
    }
    throw NumericalError(
        "disturbance sampler: rejection sampling stalled; the support box is "
        "too small relative to the covariance");
  }

 private:
  DisturbanceModel model_;
  Eigen::MatrixXd chol_;
};

}  // namespace smpc
