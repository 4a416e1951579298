#include <doctest.h>

#include <cmath>
#include <complex>

#include "gridstate/measurement.hpp"
#include "gridstate/network.hpp"
#include "oracles.hpp"

using namespace gridstate;

namespace {

// Reference power flow quantities computed straight from circuit identities,
// no measurement matrices involved.
VectorXc injection_currents(const Network& net, const VectorXc& v) {
  return bus_admittance(net) * v;
}

}  // namespace

TEST_CASE("measurement matrices are Hermitian") {
  const Network net = oracle::random_network(101, 9, true);
  const MeasurementMatrices mm = build_measurement_matrices(net);

  auto hermitian = [](const MatrixXc& m) {
    return (m - m.adjoint()).cwiseAbs().maxCoeff();
  };
  for (int k = 0; k < net.bus_count(); ++k) {
    CHECK(hermitian(mm.bus_mag[k]) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(hermitian(mm.bus_p[k]) < 1e-14);
    CHECK(hermitian(mm.bus_q[k]) < 1e-14);
  }
  for (int l = 0; l < net.branch_count(); ++l) {
    CHECK(hermitian(mm.flow_pf[l]) < 1e-14);
    CHECK(hermitian(mm.flow_qf[l]) < 1e-14);
    CHECK(hermitian(mm.flow_pt[l]) < 1e-14);
    CHECK(hermitian(mm.flow_qt[l]) < 1e-14);
  }
}

TEST_CASE("injection trace forms reproduce v .* conj(Y v)") {
  const Network net = oracle::random_network(77, 11, true);
  const MeasurementMatrices mm = build_measurement_matrices(net);
  Rng rng(4242);
  for (int trial = 0; trial < 4; ++trial) {
    VectorXc v(net.bus_count());
    for (int i = 0; i < v.size(); ++i)
      v[i] = Complex(rng.uniform(0.9, 1.1), rng.uniform(-0.2, 0.2));
    const VectorXc s = v.cwiseProduct(injection_currents(net, v).conjugate());
    for (int k = 0; k < net.bus_count(); ++k) {
      const Real p = trace_value(mm.bus_p[k], v);
      const Real q = trace_value(mm.bus_q[k], v);
      CHECK(p == doctest::Approx(s[k].real()).epsilon(1e-12));
      CHECK(q == doctest::Approx(s[k].imag()).epsilon(1e-12));
    }
  }
}

TEST_CASE("flow trace forms reproduce terminal-voltage times branch current") {
  const Network net = oracle::random_network(55, 8, true);
  const MeasurementMatrices mm = build_measurement_matrices(net);
  const auto [yf, yt] = branch_admittance(net);
  Rng rng(99);
  VectorXc v(net.bus_count());
  for (int i = 0; i < v.size(); ++i)
    v[i] = Complex(rng.uniform(0.9, 1.1), rng.uniform(-0.2, 0.2));
  const VectorXc cf = yf * v;
  const VectorXc ct = yt * v;
  for (int l = 0; l < net.branch_count(); ++l) {
    const Complex sf = v[net.branches[l].from] * std::conj(cf[l]);
    const Complex st = v[net.branches[l].to] * std::conj(ct[l]);
    CHECK(trace_value(mm.flow_pf[l], v) == doctest::Approx(sf.real()).epsilon(1e-12));
    CHECK(trace_value(mm.flow_qf[l], v) == doctest::Approx(sf.imag()).epsilon(1e-12));
    CHECK(trace_value(mm.flow_pt[l], v) == doctest::Approx(st.real()).epsilon(1e-12));
    CHECK(trace_value(mm.flow_qt[l], v) == doctest::Approx(st.imag()).epsilon(1e-12));
  }
}

TEST_CASE("evaluate_h agrees with the trace forms on scalar channels") {
  const Network net = oracle::random_network(31, 7, false);
  const MeasurementMatrices mm = build_measurement_matrices(net);
  Rng rng(7);
  VectorXc v(net.bus_count());
  for (int i = 0; i < v.size(); ++i)
    v[i] = Complex(rng.uniform(0.9, 1.1), rng.uniform(-0.2, 0.2));

  for (int k = 0; k < net.bus_count(); ++k) {
    CHECK(evaluate_h(mm, v, MeasKind::scada_voltage_mag, k).real() ==
          doctest::Approx(std::abs(v[k])).epsilon(1e-14));
    CHECK(evaluate_h(mm, v, MeasKind::scada_p_injection, k).real() ==
          doctest::Approx(trace_value(mm.bus_p[k], v)).epsilon(1e-12));
    CHECK(evaluate_h(mm, v, MeasKind::scada_q_injection, k).real() ==
          doctest::Approx(trace_value(mm.bus_q[k], v)).epsilon(1e-12));
  }
  for (int l = 0; l < net.branch_count(); ++l) {
    CHECK(evaluate_h(mm, v, MeasKind::scada_p_flow_from, l).real() ==
          doctest::Approx(trace_value(mm.flow_pf[l], v)).epsilon(1e-12));
    CHECK(evaluate_h(mm, v, MeasKind::scada_q_flow_to, l).real() ==
          doctest::Approx(trace_value(mm.flow_qt[l], v)).epsilon(1e-12));
  }
}

TEST_CASE("evaluate_h phasor channels match circuit quantities") {
  const Network net = oracle::random_network(63, 6, true);
  const MeasurementMatrices mm = build_measurement_matrices(net);
  const auto [yf, yt] = branch_admittance(net);
  Rng rng(12);
  VectorXc v(net.bus_count());
  for (int i = 0; i < v.size(); ++i)
    v[i] = Complex(rng.uniform(0.9, 1.1), rng.uniform(-0.2, 0.2));
  const VectorXc inj = injection_currents(net, v);
  const VectorXc cf = yf * v;
  const VectorXc ct = yt * v;

  for (int k = 0; k < net.bus_count(); ++k) {
    CHECK(std::abs(evaluate_h(mm, v, MeasKind::pmu_voltage, k) - v[k]) < 1e-14);
    CHECK(std::abs(evaluate_h(mm, v, MeasKind::pmu_current_injection, k) -
                   inj[k]) < 1e-12);
  }
  for (int l = 0; l < net.branch_count(); ++l) {
    CHECK(std::abs(evaluate_h(mm, v, MeasKind::pmu_current_flow_from, l) -
                   cf[l]) < 1e-12);
    CHECK(std::abs(evaluate_h(mm, v, MeasKind::pmu_current_flow_to, l) -
                   ct[l]) < 1e-12);
  }
}

TEST_CASE("two-bus reference values at the true state") {
  const Network net = oracle::two_bus_network();
  const MeasurementMatrices mm = build_measurement_matrices(net);
  const VectorXc v = oracle::two_bus_truth();

  // Load bus draws about 2 + 1i per unit; sending end covers the line loss.
  CHECK(trace_value(mm.bus_p[1], v) == doctest::Approx(-2.0).epsilon(1e-2));
  CHECK(trace_value(mm.bus_q[1], v) == doctest::Approx(-1.0).epsilon(1e-2));
  CHECK(trace_value(mm.bus_p[0], v) > 2.0);
  CHECK(std::abs(v[1]) == doctest::Approx(0.8280917823526569).epsilon(1e-15));
}

TEST_CASE("power_injections matches per-bus trace forms") {
  const Network net = oracle::random_network(17, 10, true);
  const MeasurementMatrices mm = build_measurement_matrices(net);
  Rng rng(3);
  VectorXc v(net.bus_count());
  for (int i = 0; i < v.size(); ++i)
    v[i] = Complex(rng.uniform(0.9, 1.1), rng.uniform(-0.2, 0.2));
  const VectorXc s = power_injections(net, v);
  for (int k = 0; k < net.bus_count(); ++k) {
    CHECK(s[k].real() == doctest::Approx(trace_value(mm.bus_p[k], v)).epsilon(1e-12));
    CHECK(s[k].imag() == doctest::Approx(trace_value(mm.bus_q[k], v)).epsilon(1e-12));
  }
}

TEST_CASE("default plan covers buses and from-side flows") {
  const Network net = load_case(GRIDSTATE_DATA_DIR "/case14.m").network;
  const MeasurementPlan plan = default_measurement_plan(net);
  CHECK(plan.size() == 3 * 14 + 2 * 20);

  int mags = 0, flows = 0;
  for (const auto& [kind, target] : plan) {
    if (kind == MeasKind::scada_voltage_mag) ++mags;
    if (kind == MeasKind::scada_p_flow_from || kind == MeasKind::scada_q_flow_from)
      ++flows;
  }
  CHECK(mags == 14);
  CHECK(flows == 40);
}

TEST_CASE("clean measurements evaluate to the true channel values") {
  const CaseFile cf = load_case(GRIDSTATE_DATA_DIR "/case14.m");
  const MeasurementMatrices mm = build_measurement_matrices(cf.network);
  const MeasurementPlan plan = default_measurement_plan(cf.network);
  const MeasurementSet ms = make_clean_measurements(mm, cf.state, plan);
  REQUIRE(ms.size() == plan.size());
  for (const Measurement& m : ms.entries) {
    const Complex h = evaluate_h(mm, cf.state, m.kind, m.target);
    CHECK(std::abs(h - m.value) < 1e-14);
    CHECK(m.weight == 1.0);
    CHECK_FALSE(m.faulty);
  }
}

TEST_CASE("budget weights double for phasor channels") {
  CHECK(budget_weight(MeasKind::scada_voltage_mag) == 1);
  CHECK(budget_weight(MeasKind::scada_p_flow_to) == 1);
  CHECK(budget_weight(MeasKind::pmu_voltage) == 2);
  CHECK(budget_weight(MeasKind::pmu_current_flow_to) == 2);

  MeasurementSet ms;
  ms.entries.push_back({MeasKind::scada_voltage_mag, 0, Complex(1, 0), 1.0, false});
  ms.entries.push_back({MeasKind::pmu_voltage, 1, Complex(1, 0), 1.0, false});
  CHECK(ms.total_budget_weight() == 3);
}

TEST_CASE("kind names round-trip") {
  for (int k = 0; k < kMeasKindCount; ++k) {
    const auto kind = static_cast<MeasKind>(k);
    CHECK(kind_from_name(kind_name(kind)) == kind);
  }
  CHECK_THROWS_AS(kind_from_name("bogus"), config_error);
}
