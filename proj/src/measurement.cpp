#include "gridstate/measurement.hpp"

#include <array>

namespace gridstate {

namespace {

const std::array<const char*, kMeasKindCount> kKindNames = {
    "scada_voltage_mag", "scada_p_injection", "scada_q_injection",
    "scada_p_flow_from", "scada_q_flow_from", "scada_p_flow_to",
    "scada_q_flow_to",   "pmu_voltage",       "pmu_current_injection",
    "pmu_current_flow_from", "pmu_current_flow_to"};

constexpr Complex kHalf{0.5, 0.0};
constexpr Complex kHalfI{0.0, 0.5};

}  // namespace

bool is_pmu(MeasKind kind) {
  return static_cast<int>(kind) >= static_cast<int>(MeasKind::pmu_voltage);
}

bool is_branch_kind(MeasKind kind) {
  switch (kind) {
    case MeasKind::scada_p_flow_from:
    case MeasKind::scada_q_flow_from:
    case MeasKind::scada_p_flow_to:
    case MeasKind::scada_q_flow_to:
    case MeasKind::pmu_current_flow_from:
    case MeasKind::pmu_current_flow_to:
      return true;
    default:
      return false;
  }
}

int budget_weight(MeasKind kind) { return is_pmu(kind) ? 2 : 1; }

const char* kind_name(MeasKind kind) {
  return kKindNames[static_cast<int>(kind)];
}

MeasKind kind_from_name(const std::string& name) {
  for (int i = 0; i < kMeasKindCount; ++i)
    if (name == kKindNames[i]) return static_cast<MeasKind>(i);
  throw config_error("unknown measurement kind: " + name);
}

int MeasurementSet::l_scada() const {
  int count = 0;
  for (const Measurement& e : entries) count += is_pmu(e.kind) ? 0 : 1;
  return count;
}

int MeasurementSet::l_pmu() const {
  int count = 0;
  for (const Measurement& e : entries) count += is_pmu(e.kind) ? 1 : 0;
  return count;
}

int MeasurementSet::total_budget_weight() const {
  int total = 0;
  for (const auto& e : entries) total += budget_weight(e.kind);
  return total;
}

const MatrixXc& MeasurementMatrices::trace_form(MeasKind kind,
                                                int target) const {
  switch (kind) {
    case MeasKind::scada_voltage_mag:
      return bus_mag[target];
    case MeasKind::scada_p_injection:
      return bus_p[target];
    case MeasKind::scada_q_injection:
      return bus_q[target];
    case MeasKind::scada_p_flow_from:
      return flow_pf[target];
    case MeasKind::scada_q_flow_from:
      return flow_qf[target];
    case MeasKind::scada_p_flow_to:
      return flow_pt[target];
    case MeasKind::scada_q_flow_to:
      return flow_qt[target];
    default:
      throw config_error("phasor kinds have no trace form");
  }
}

MeasurementMatrices build_measurement_matrices(const Network& net) {
  const int n = net.bus_count();
  const int m = net.branch_count();
  MeasurementMatrices mm;
  mm.y = bus_admittance(net);
  auto br = branch_admittance(net);
  mm.yf = std::move(br.from);
  mm.yt = std::move(br.to);
  for (const Branch& b : net.branches) {
    mm.branch_from.push_back(b.from);
    mm.branch_to.push_back(b.to);
  }

  mm.bus_mag.reserve(n);
  mm.bus_p.reserve(n);
  mm.bus_q.reserve(n);
  for (int k = 0; k < n; ++k) {
    MatrixXc ek = MatrixXc::Zero(n, n);
    ek(k, k) = Complex(1, 0);
    mm.bus_mag.push_back(ek);
    // E_k Y keeps row k of Y; Y* E_k keeps column k of Y*.
    MatrixXc eky = MatrixXc::Zero(n, n);
    eky.row(k) = mm.y.row(k);
    MatrixXc ysek = MatrixXc::Zero(n, n);
    ysek.col(k) = mm.y.row(k).adjoint();
    mm.bus_p.push_back(kHalf * (ysek + eky));
    mm.bus_q.push_back(kHalfI * (eky - ysek));
  }

  mm.flow_pf.reserve(m);
  mm.flow_qf.reserve(m);
  mm.flow_pt.reserve(m);
  mm.flow_qt.reserve(m);
  for (int l = 0; l < m; ++l) {
    const int lf = net.branches[l].from;
    const int lt = net.branches[l].to;
    // e_{lf} d_l^T Yf keeps row l of Yf in row lf; Yf* d_l e_{lf}^T keeps its
    // conjugate in column lf.
    MatrixXc ef = MatrixXc::Zero(n, n);
    ef.row(lf) = mm.yf.row(l);
    MatrixXc efs = MatrixXc::Zero(n, n);
    efs.col(lf) = mm.yf.row(l).adjoint();
    mm.flow_pf.push_back(kHalf * (efs + ef));
    mm.flow_qf.push_back(kHalfI * (ef - efs));

    MatrixXc et = MatrixXc::Zero(n, n);
    et.row(lt) = mm.yt.row(l);
    MatrixXc ets = MatrixXc::Zero(n, n);
    ets.col(lt) = mm.yt.row(l).adjoint();
    mm.flow_pt.push_back(kHalf * (ets + et));
    mm.flow_qt.push_back(kHalfI * (et - ets));
  }
  return mm;
}

VectorXc power_injections(const Network& net, const StateVector& v) {
  const MatrixXc y = bus_admittance(net);
  return v.array() * (y * v).array().conjugate();
}

Real trace_value(const MatrixXc& m, const StateVector& v) {
  return (v.adjoint() * m * v)(0, 0).real();
}

Complex evaluate_h(const MeasurementMatrices& mm, const StateVector& v,
                   MeasKind kind, int target) {
  switch (kind) {
    case MeasKind::pmu_voltage:
      return v[target];
    case MeasKind::pmu_current_injection:
      return (mm.y.row(target) * v)(0, 0);
    case MeasKind::pmu_current_flow_from:
      return (mm.yf.row(target) * v)(0, 0);
    case MeasKind::pmu_current_flow_to:
      return (mm.yt.row(target) * v)(0, 0);
    case MeasKind::scada_voltage_mag:
      return Complex(std::abs(v[target]), 0);
    default: {
      Complex s;
      if (is_branch_kind(kind)) {
        const bool from_side = kind == MeasKind::scada_p_flow_from ||
                               kind == MeasKind::scada_q_flow_from;
        const Complex i_br = from_side ? (mm.yf.row(target) * v)(0, 0)
                                       : (mm.yt.row(target) * v)(0, 0);
        const int term = from_side ? mm.branch_from[target]
                                   : mm.branch_to[target];
        s = v[term] * std::conj(i_br);
      } else {
        const Complex i_inj = (mm.y.row(target) * v)(0, 0);
        s = v[target] * std::conj(i_inj);
      }
      switch (kind) {
        case MeasKind::scada_p_injection:
        case MeasKind::scada_p_flow_from:
        case MeasKind::scada_p_flow_to:
          return Complex(s.real(), 0);
        default:
          return Complex(s.imag(), 0);
      }
    }
  }
}

MeasurementPlan default_measurement_plan(const Network& net) {
  MeasurementPlan plan;
  for (int k = 0; k < net.bus_count(); ++k) {
    plan.emplace_back(MeasKind::scada_voltage_mag, k);
    plan.emplace_back(MeasKind::scada_p_injection, k);
    plan.emplace_back(MeasKind::scada_q_injection, k);
  }
  for (int l = 0; l < net.branch_count(); ++l) {
    plan.emplace_back(MeasKind::scada_p_flow_from, l);
    plan.emplace_back(MeasKind::scada_q_flow_from, l);
  }
  return plan;
}

MeasurementSet make_clean_measurements(const MeasurementMatrices& mm,
                                       const StateVector& v,
                                       const MeasurementPlan& plan) {
  MeasurementSet ms;
  ms.entries.reserve(plan.size());
  for (const auto& [kind, target] : plan) {
    Measurement e;
    e.kind = kind;
    e.target = target;
    e.value = evaluate_h(mm, v, kind, target);
    ms.entries.push_back(e);
  }
  return ms;
}

}  // namespace gridstate
