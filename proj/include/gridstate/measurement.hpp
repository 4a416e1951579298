#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gridstate/network.hpp"
#include "gridstate/types.hpp"

namespace gridstate {

// The closed set of measurement kinds. SCADA channels are real-valued, PMU
// channels are complex phasors and count as two real measurements in every
// budget.
enum class MeasKind : int {
  scada_voltage_mag = 0,  // |v_k|
  scada_p_injection = 1,  // Re s_k
  scada_q_injection = 2,  // Im s_k
  scada_p_flow_from = 3,  // Re s_{f,l}
  scada_q_flow_from = 4,  // Im s_{f,l}
  scada_p_flow_to = 5,    // Re s_{t,l}
  scada_q_flow_to = 6,    // Im s_{t,l}
  pmu_voltage = 7,        // v_k
  pmu_current_injection = 8,  // (Y v)_k
  pmu_current_flow_from = 9,  // (Y_f v)_l
  pmu_current_flow_to = 10,   // (Y_t v)_l
};

constexpr int kMeasKindCount = 11;

bool is_pmu(MeasKind kind);
bool is_branch_kind(MeasKind kind);  // target is a branch index, else a bus
// PMU entries count twice toward selection budgets, SCADA entries once.
int budget_weight(MeasKind kind);
const char* kind_name(MeasKind kind);
MeasKind kind_from_name(const std::string& name);  // throws config_error

struct Measurement {
  MeasKind kind = MeasKind::scada_voltage_mag;
  int target = 0;       // internal bus or branch index
  Complex value{0, 0};  // imaginary part unused for SCADA kinds
  Real weight = 1.0;
  bool faulty = false;  // ground-truth flag set by fault injection

  bool operator==(const Measurement&) const = default;
};

struct MeasurementSet {
  std::vector<Measurement> entries;

  int size() const { return static_cast<int>(entries.size()); }
  // Channel counts by family; budget weight is l_scada() + 2 * l_pmu().
  int l_scada() const;
  int l_pmu() const;
  // Total selection budget: 2 per PMU entry, 1 per SCADA entry.
  int total_budget_weight() const;
};

// Hermitian coefficient matrices: every measured quantity is Tr(M v v*) for
// the real kinds, or a fixed row of an admittance matrix for the phasor
// kinds.
struct MeasurementMatrices {
  MatrixXc y;         // bus admittance
  MatrixXc yf, yt;    // branch admittance, from and to side
  std::vector<int> branch_from, branch_to;  // branch terminal bus indices
  std::vector<MatrixXc> bus_mag;   // E_k
  std::vector<MatrixXc> bus_p;     // (Y* E_k + E_k Y) / 2
  std::vector<MatrixXc> bus_q;     // i (E_k Y - Y* E_k) / 2
  std::vector<MatrixXc> flow_pf, flow_qf;  // from-side flow forms
  std::vector<MatrixXc> flow_pt, flow_qt;  // to-side flow forms

  const MatrixXc& trace_form(MeasKind kind, int target) const;
};

MeasurementMatrices build_measurement_matrices(const Network& net);

// s = v .* conj(Y v), one apparent-power injection per bus.
VectorXc power_injections(const Network& net, const StateVector& v);

// Real part of v* M v; M is expected Hermitian.
Real trace_value(const MatrixXc& m, const StateVector& v);

// True (noise-free) value of one measured quantity at state v.
Complex evaluate_h(const MeasurementMatrices& mm, const StateVector& v,
                   MeasKind kind, int target);

// Requested channels for a simulation or benchmark run.
using MeasurementPlan = std::vector<std::pair<MeasKind, int>>;

// The benchmark profile: |v|, p and q injection at every bus, p and q flow at
// the from side of every branch.
MeasurementPlan default_measurement_plan(const Network& net);

// Noise-free measurement set for a plan, all weights 1.
MeasurementSet make_clean_measurements(const MeasurementMatrices& mm,
                                       const StateVector& v,
                                       const MeasurementPlan& plan);

}  // namespace gridstate
