#pragma once

#include <cstdint>
#include <vector>

#include "gridstate/measurement.hpp"
#include "gridstate/types.hpp"

namespace gridstate {

// One component of the communication-network error mixture.
struct GmmComponent {
  Real weight = 1.0;
  Real mean = 0.0;
  Real std = 0.0;
};

// Parameters of the instrumentation error chain. A voltage reading passes a
// voltage transformer (ratio error bounded by accuracy class, half systematic
// per installed sensor, half random per sample), control cabling (non-zero
// mean Gaussian), the measuring device (zero-mean Gaussian) and the network
// (Gaussian mixture). Currents use the same chain with the CT bound. Angle
// stages reuse the transformer bound and the cable distribution, in radians.
struct ErrorChainConfig {
  Real vt_ratio_bound = 0.005;
  Real ct_ratio_bound = 0.005;
  Real cab_mean = 0.001;
  Real cab_std = 0.002;
  Real ied_std = 0.001;
  std::vector<GmmComponent> cn_gmm{{0.95, 0.0, 0.001}, {0.05, 0.0, 0.01}};
  Real drop_probability = 0.0;    // lost sample: entry omitted from the set
  std::uint64_t systematic_seed = 0;  // identity of the installed sensor fleet
};

void validate(const ErrorChainConfig& cfg);

// Simulate readings for the given channels at the true state. Per-bus voltage
// chains and per-source current chains are drawn once and shared by every
// channel fed from them, so the returned values do not depend on which other
// channels appear in the plan. Deterministic in (cfg, seed).
MeasurementSet simulate_measurements(const MeasurementMatrices& mm,
                                     const StateVector& v_true,
                                     const MeasurementPlan& plan,
                                     const ErrorChainConfig& cfg,
                                     std::uint64_t seed);

// Restricted variants; they reject channels of the other family.
MeasurementSet simulate_scada(const MeasurementMatrices& mm,
                              const StateVector& v_true,
                              const MeasurementPlan& plan,
                              const ErrorChainConfig& cfg, std::uint64_t seed);
MeasurementSet simulate_pmu(const MeasurementMatrices& mm,
                            const StateVector& v_true,
                            const MeasurementPlan& plan,
                            const ErrorChainConfig& cfg, std::uint64_t seed);

// Gross-error protocol: each entry is independently faulty with probability
// p_f. Non-faulty entries receive additive N(0, 0.1|m|) noise, faulty ones
// N(0, 100|m|), where m is the entry value and |m| is floored at 1e-4 so
// zero-valued channels stay perturbable. Complex entries get an independent
// draw of the same variance per real component. The faulty flags record the
// ground truth for evaluation only; estimators must not read them.
MeasurementSet inject_faults(const MeasurementSet& ms, Real p_f,
                             std::uint64_t seed);

}  // namespace gridstate
