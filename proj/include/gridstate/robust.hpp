#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "gridstate/estimation.hpp"

namespace gridstate {

// 0/1 keep decision per measurement entry, aligned with the entries of the
// problem's measurement set. Phasor entries spend 2 units of the budget d
// (two real scalars each), scalar entries 1.
struct SelectionMask {
  std::vector<int> keep;
  int budget = 0;

  // Budget actually spent by the kept entries.
  int spent(const MeasurementSet& ms) const;
};

struct RobustOptions {
  WlsOptions wls;
  // Multistart width of every inner state solve. Bounds and incumbents use
  // the same width, so the search is self-consistent at desk scale.
  int starts = 8;
  std::uint64_t seed = 0;
  // Stop once incumbent minus best open bound is within this.
  Real gap = 1e-6;
  // Wall clock cap in seconds; 0 runs to completion. On expiry the best
  // incumbent is returned with its remaining bound_gap, not an error.
  double time_limit = 0.0;
  long node_limit = 0;  // 0 = unlimited
  // Budget as >= d instead of == d.
  bool at_least = false;
  int workers = 0;  // 0 = thread_count()
};

struct RobustResult {
  StateVector state;
  SelectionMask mask;
  Real cost = 0.0;
  long nodes_explored = 0;
  Real bound_gap = 0.0;
  // True when the search closed every node; false on time or node limits.
  bool proven = false;
};

// Joint measurement selection and state estimation: minimize the weighted
// least squares cost over the kept entries, over all masks spending exactly
// (or at least) d. Branch and bound on the keep decisions; each node bounds
// the subtree by relaxing the undecided decisions to [0, 1] and alternating
// state solves with a fractional knapsack reassignment. Complete masks are
// evaluated by a multistart solve seeded from the mask bits, so any two
// searches agree bitwise on the value of a mask.
RobustResult solve_robust(const EstimationProblem& prob, int d,
                          const RobustOptions& opts = {});

// Exhaustive reference: evaluates every feasible mask, ties broken toward
// the lexicographically smallest keep vector. Refuses more than 20 entries.
RobustResult enumerate_oracle(const EstimationProblem& prob, int d,
                              const RobustOptions& opts = {});

struct LassoOptions {
  WlsOptions wls;
  int starts = 8;
  std::uint64_t seed = 0;
  int max_rounds = 100;
  // Without init the alternation cold-starts from a multistart fit of the
  // full selection. With init it thresholds at that state first, which pins
  // the fixed point the alternation converges to.
  std::optional<StateVector> init;
};

struct LassoResult {
  StateVector state;
  // One value per entry; the alternating fixed point is always 0 or 1.
  VectorXr selection;
  Real data_cost = 0.0;       // selection-weighted residual sum
  Real penalized_cost = 0.0;  // data_cost + r * budget weight of dropped
  int rounds = 0;
  bool converged = false;
};

// Relaxation of solve_robust: the budget constraint is replaced by a price r
// per unit of dropped budget weight. Alternates state solves with the closed
// form per-entry rule: keep while the residual term stays below r times the
// entry's budget weight, drop once it reaches it. A zero residual therefore
// always keeps its entry.
LassoResult solve_lasso(const EstimationProblem& prob, Real r,
                        const LassoOptions& opts = {});

}  // namespace gridstate
