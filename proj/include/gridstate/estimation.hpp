#pragma once

#include <cstdint>

#include "gridstate/measurement.hpp"
#include "gridstate/network.hpp"
#include "gridstate/types.hpp"

namespace gridstate {

// Per-class objective weights, all one by default.
struct ObjectiveWeights {
  Real pmu_voltage = 1.0;
  Real pmu_current = 1.0;
  Real pmu_flow = 1.0;       // branch current phasors, both ends
  Real scada_pq = 1.0;       // every SCADA power channel
  Real scada_voltage = 1.0;

  Real of(MeasKind kind) const;
};

struct EstimationProblem {
  Network net;
  MeasurementSet measurements;
  MeasurementMatrices matrices;
  ObjectiveWeights weights;
  // One multiplier per entry; empty means all ones. Fractional values are
  // allowed (relaxations); exact solvers use {0,1}.
  VectorXr selection;

  Real selection_of(int j) const {
    return selection.size() == 0 ? 1.0 : selection[j];
  }
};

EstimationProblem make_problem(const Network& net, MeasurementSet ms,
                               ObjectiveWeights weights = {});

// Real parameter vector over 2n-1 coordinates with the reference-bus gauge
// Im v_ref = 0: (Re v_i, i != ref), (Im v_i, i != ref), (Re v_ref).
VectorXr state_to_params(const StateVector& v, int ref);
StateVector params_to_state(const VectorXr& x, int ref);

StateVector flat_start(int n);

// Weighted least-squares cost: squared residuals for every channel, with the
// SCADA voltage term on squared magnitudes, (|v_k|^2 - z^2)^2.
Real objective_cost(const EstimationProblem& prob, const StateVector& v);

// Per-entry residual terms with class and entry weights applied but the
// selection multipliers left out, so objective_cost == selection . terms.
VectorXr objective_terms(const EstimationProblem& prob, const StateVector& v);

// Analytic gradient over the 2n-1 real coordinates.
VectorXr objective_gradient(const EstimationProblem& prob,
                            const StateVector& v);

struct WlsOptions {
  Real ftol = 1e-6;       // relative objective decrease
  Real gtol = 1e-6;       // max absolute gradient entry
  int max_iterations = 5000;
  int memory = 10;        // quasi-Newton history length
  Real armijo_c = 1e-4;
};

struct EstimateResult {
  StateVector state;
  Real cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Limited-memory quasi-Newton descent with backtracking line search.
// Accepted iterates never increase the cost.
EstimateResult estimate_wls(const EstimationProblem& prob,
                            const StateVector& init,
                            const WlsOptions& opts = {});

// Best of k runs: the flat start plus k-1 random starts with magnitudes in
// [0.8, 1.2] and angles within +-30 degrees. Ties break toward the lower
// start index, so the result is independent of the worker count.
EstimateResult multistart(const EstimationProblem& prob, int k,
                          std::uint64_t seed, const WlsOptions& opts = {});

StateVector random_start(int n, int ref, std::uint64_t seed);

// Squared 2-norm of the state error.
Real distance_sq(const StateVector& a, const StateVector& b);
// Largest entrywise error magnitude.
Real distance_inf(const StateVector& a, const StateVector& b);

// Worker cap shared by the multistart, benchmark, and search loops:
// GRIDSTATE_THREADS when set, hardware concurrency otherwise.
int thread_count();

}  // namespace gridstate
