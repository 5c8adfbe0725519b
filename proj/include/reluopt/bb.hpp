#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "reluopt/model.hpp"
#include "reluopt/simplex.hpp"

namespace reluopt::mip {

struct BBOptions {
  double time_limit = 3600.0;  // seconds
  /// Relative gap |incumbent - bound| / max(|incumbent|, 1e-9) at which to stop.
  double gap = 0.01;
  double integrality_tol = 1e-6;
  long long node_limit = std::numeric_limits<long long>::max();
  /// Breaks most-fractional ties; 0 keeps the lowest index.
  std::uint64_t seed = 0;
  /// Run the rounding heuristics every this many nodes (and at the root):
  /// plain rounding, then fractional diving when that fails.
  int heuristic_every = 100;
  lp::SimplexOptions lp;
  /// Optional starting point indexed by variable, NaN where unknown. Its
  /// binaries are fixed (rounded) and the LP re-solved before the root; an
  /// integral optimum of that LP becomes the first incumbent.
  std::vector<double> start;

  void validate() const;
};

/// Best-bound branch and bound with depth-first dives until the first
/// incumbent. One simplex engine is reused for every node; a node only
/// changes binary bounds and re-solves from the previous basis.
///
/// Models without binaries are passed straight to the simplex solver.
opt::SolveResult solve_mip(const opt::OptModel& model, const BBOptions& opts = {});

}  // namespace reluopt::mip
