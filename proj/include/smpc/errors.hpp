#pragma once

#include <stdexcept>
#include <string>

namespace smpc {

/// Malformed or inconsistent user input (config files, shapes, ranges).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A controller design cannot be completed (tightening saturates above the
/// constraint level, terminal set empty, unstable closed loop, ...).
class DesignError : public std::runtime_error {
 public:
  explicit DesignError(const std::string& what) : std::runtime_error(what) {}
};

/// A property that is guaranteed by construction failed at run time, e.g. a
/// controller with a recursive feasibility guarantee hit an infeasible
/// problem mid-rollout.  Treated as an alarm, not a normal error path.
class InvariantViolation : public std::runtime_error {
 public:
  explicit InvariantViolation(const std::string& what)
      : std::runtime_error(what) {}
};

/// Numerical breakdown inside a solver (singular basis, iteration cap, ...).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what)
      : std::runtime_error(what) {}
};

}  // namespace smpc
