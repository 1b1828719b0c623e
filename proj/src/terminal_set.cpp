#include "smpc/terminal_set.hpp"

#include <sstream>

#include "smpc/errors.hpp"
#include "smpc/lp.hpp"

namespace smpc {

Polytope build_terminal_set(const ClosedLoopDesign& design,
                            const TighteningProfile& profile,
                            Eigen::Index offset) {
  const Eigen::Index n = design.Phi.rows();
  const Eigen::Index r = design.F_tilde.rows();
  if (r < 1) {
    throw ConfigError("terminal set needs at least one constraint row");
  }
  if (design.F_tilde.cols() != n) {
    throw ConfigError(
        "terminal set: constraint rows do not match the state dimension");
  }
  if (profile.rows() != r) {
    throw ConfigError(
        "terminal set: profile rows do not match the constraint rows");
  }
  if (offset < 0) {
    throw ConfigError("terminal set: level offset must be nonnegative");
  }

  constexpr Eigen::Index kMaxLayers = 1000;
  constexpr double kRedundancyTol = 1e-9;

  Polytope set;
  set.H.resize(0, n);
  set.b.resize(0);

  Eigen::MatrixXd layer = design.F_tilde;  // F_tilde Phi^i for the new depth
  auto level_rhs = [&](Eigen::Index depth) {
    Eigen::VectorXd rhs(r);
    for (Eigen::Index j = 0; j < r; ++j) {
      rhs(j) = 1.0 - profile.value(j, offset + depth);
    }
    return rhs;
  };

  for (Eigen::Index depth = 0; depth < kMaxLayers; ++depth) {
    // Append the layer for this depth.
    const Eigen::Index base = set.H.rows();
    set.H.conservativeResize(base + r, n);
    set.b.conservativeResize(base + r);
    set.H.bottomRows(r) = layer;
    set.b.tail(r) = level_rhs(depth);
    layer = layer * design.Phi;

    // The next layer's right-hand sides must already be constant, otherwise
    // deeper layers keep cutting and redundancy below proves nothing.
    if (offset + depth + 1 < profile.prefix_length()) continue;

    bool next_layer_redundant = true;
    const Eigen::VectorXd next_rhs = level_rhs(depth + 1);
    for (Eigen::Index j = 0; j < r && next_layer_redundant; ++j) {
      const LpResult lp =
          maximize_linear(layer.row(j).transpose(), set.H, set.b);
      if (lp.status == LpStatus::Infeasible) {
        set.empty = true;
        set.determination_index = static_cast<int>(depth);
        return set;
      }
      if (lp.status == LpStatus::Unbounded ||
          lp.value > next_rhs(j) + kRedundancyTol) {
        next_layer_redundant = false;
      }
    }
    if (next_layer_redundant) {
      Polytope reduced = remove_redundant(set);
      reduced.determination_index = static_cast<int>(depth);
      return reduced;
    }
  }

  std::ostringstream msg;
  msg << "terminal set was not determined within " << kMaxLayers
      << " layers (offset " << offset << ", prefix length "
      << profile.prefix_length() << "); the loop contracts too slowly or the "
      << "profile saturates too late";
  throw DesignError(msg.str());
}

}  // namespace smpc
