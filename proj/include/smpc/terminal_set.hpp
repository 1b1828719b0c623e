#pragma once

#include <Eigen/Dense>

#include "smpc/polytope.hpp"
#include "smpc/system.hpp"
#include "smpc/tightening.hpp"

namespace smpc {

/// Largest constraint-admissible set for the autonomous loop s+ = Phi s
/// under depth-dependent tightening:
///
///   O = { s : F_tilde Phi^i s <= 1 - levels(offset + i)  for all i >= 0 }
///
/// where levels(k) is the profile value at index k (rows evaluated
/// per-constraint).  Layers are added until (a) every row of the next layer
/// is provably redundant and (b) the level lookups have reached their
/// saturation value, at which point the remaining layers repeat with
/// constant right-hand sides and redundancy propagates by invariance.  Both
/// conditions are required: redundancy alone stops too early while levels
/// are still rising.
///
/// Requires a nondecreasing profile (all tightening sequences produced by
/// this library are).  An empty result is reported through the polytope's
/// `empty` flag rather than an exception so infeasible designs can be
/// surfaced gracefully; `determination_index` records the final layer depth.
/// Throws DesignError if no determination is reached within 1000 layers.
Polytope build_terminal_set(const ClosedLoopDesign& design,
                            const TighteningProfile& profile,
                            Eigen::Index offset);

}  // namespace smpc
