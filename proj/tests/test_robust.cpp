#include <doctest.h>

#include <cmath>
#include <vector>

#include "gridstate/noise.hpp"
#include "gridstate/robust.hpp"
#include "gridstate/rng.hpp"
#include "oracles.hpp"

using namespace gridstate;

namespace {

RobustOptions exact_opts(int starts = 8, std::uint64_t seed = 3) {
  RobustOptions opts;
  opts.starts = starts;
  opts.seed = seed;
  opts.gap = 0.0;
  opts.workers = 1;
  opts.wls.ftol = 1e-12;
  return opts;
}

// Two-bus problem with one entry pushed far off its clean value.
EstimationProblem outlier_problem(int bad, Real shift) {
  EstimationProblem prob = oracle::two_bus_problem();
  prob.measurements.entries[bad].value += Complex(shift, 0);
  return prob;
}

// Five scalar channels on the two-bus net. Dropping any one entry leaves
// four equations on three state dofs, so a mask that keeps the corrupted
// entry has strictly positive cost and the drop choice is identified. (With
// only four channels every single-drop mask fits exactly and they all tie.)
EstimationProblem overdetermined_problem(int bad, Real shift) {
  using gridstate::MeasKind;
  const Network net = oracle::two_bus_network();
  const auto mm = build_measurement_matrices(net);
  const MeasurementPlan plan = {
      {MeasKind::scada_voltage_mag, 0}, {MeasKind::scada_voltage_mag, 1},
      {MeasKind::scada_p_injection, 1}, {MeasKind::scada_q_injection, 1},
      {MeasKind::scada_p_injection, 0},
  };
  auto ms = make_clean_measurements(mm, oracle::two_bus_truth(), plan);
  if (bad >= 0) ms.entries[bad].value += Complex(shift, 0);
  return make_problem(net, std::move(ms));
}

// Phasor at bus 2 plus the four scalar channels; the phasor spends two
// budget units.
EstimationProblem pmu_mixed_problem(Complex pmu_shift, int scada_bad,
                                    Real scada_shift) {
  using gridstate::MeasKind;
  const Network net = oracle::two_bus_network();
  const auto mm = build_measurement_matrices(net);
  const MeasurementPlan plan = {
      {MeasKind::pmu_voltage, 1},       {MeasKind::scada_voltage_mag, 0},
      {MeasKind::scada_p_injection, 1}, {MeasKind::scada_q_injection, 1},
      {MeasKind::scada_p_injection, 0},
  };
  auto ms = make_clean_measurements(mm, oracle::two_bus_truth(), plan);
  ms.entries[0].value += pmu_shift;
  if (scada_bad > 0) ms.entries[scada_bad].value += Complex(scada_shift, 0);
  return make_problem(net, std::move(ms));
}

// Small random instance: clean values plus mild noise, one gross entry.
// Returns the problem and the corrupted entry index.
std::pair<EstimationProblem, int> random_instance(std::uint64_t seed,
                                                  bool with_pmu) {
  const Network net = oracle::random_network(seed, 3, true);
  const MeasurementMatrices mm = build_measurement_matrices(net);
  Rng rng(derive_seed(seed, 0xabc));
  StateVector v(3);
  for (int i = 0; i < 3; ++i)
    v[i] = std::polar(rng.uniform(0.95, 1.05),
                      net.buses[i].is_reference ? 0.0 : rng.uniform(-0.3, 0.3));
  MeasurementPlan plan;
  for (int k = 0; k < 3; ++k) {
    plan.push_back({MeasKind::scada_voltage_mag, k});
    plan.push_back({MeasKind::scada_p_injection, k});
    plan.push_back({MeasKind::scada_q_injection, k});
  }
  if (with_pmu) plan.push_back({MeasKind::pmu_voltage, 2});
  MeasurementSet ms = make_clean_measurements(mm, v, plan);
  for (Measurement& e : ms.entries) {
    e.value += Complex(0.01 * rng.normal(),
                       is_pmu(e.kind) ? 0.01 * rng.normal() : 0.0);
  }
  const int bad = static_cast<int>(rng.uniform() * ms.size());
  ms.entries[bad].value += Complex(1.5, is_pmu(ms.entries[bad].kind) ? -1.0 : 0.0);
  return {make_problem(net, std::move(ms)), bad};
}

}  // namespace

TEST_CASE("full budget reduces to plain weighted least squares") {
  const EstimationProblem prob = oracle::two_bus_problem();
  const RobustOptions opts = exact_opts();
  const RobustResult r = solve_robust(prob, 4, opts);
  const EstimateResult m = multistart(prob, opts.starts, opts.seed, opts.wls);
  CHECK(r.cost == m.cost);
  CHECK((r.state - m.state).norm() == 0.0);
  CHECK(r.mask.keep == std::vector<int>{1, 1, 1, 1});
  CHECK(r.mask.spent(prob.measurements) == 4);
  CHECK(r.proven);
  CHECK(r.bound_gap == 0.0);
}

TEST_CASE("gross outlier is the dropped entry") {
  for (int bad = 0; bad < 5; ++bad) {
    CAPTURE(bad);
    const EstimationProblem prob = overdetermined_problem(bad, 4.0);
    const RobustOptions opts = exact_opts();
    const RobustResult r = solve_robust(prob, 4, opts);
    const RobustResult o = enumerate_oracle(prob, 4, opts);
    CHECK(r.mask.keep == o.mask.keep);
    CHECK(r.cost == o.cost);
    CHECK(o.nodes_explored == 5);
    CHECK(r.mask.keep[bad] == 0);
    CHECK(r.mask.spent(prob.measurements) == 4);
    CHECK(distance_inf(r.state, oracle::two_bus_truth()) < 1e-3);
    CHECK(r.proven);
  }
}

TEST_CASE("corrupted scalar entry is dropped, the clean phasor kept") {
  for (int bad = 1; bad < 5; ++bad) {
    CAPTURE(bad);
    const EstimationProblem prob = pmu_mixed_problem(Complex(0, 0), bad, 4.0);
    const RobustOptions opts = exact_opts();
    const RobustResult r = solve_robust(prob, 5, opts);
    const RobustResult o = enumerate_oracle(prob, 5, opts);
    CHECK(r.mask.keep == o.mask.keep);
    CHECK(r.cost == o.cost);
    // Spending exactly 5 of 6 forces the phasor in and one scalar out.
    CHECK(o.nodes_explored == 4);
    CHECK(r.mask.keep[0] == 1);
    CHECK(r.mask.keep[bad] == 0);
    CHECK(distance_inf(r.state, oracle::two_bus_truth()) < 1e-3);
  }
}

TEST_CASE("corrupted phasor is dropped at double budget price") {
  const EstimationProblem prob =
      pmu_mixed_problem(Complex(1.5, -1.0), -1, 0.0);
  const RobustOptions opts = exact_opts();
  const RobustResult r = solve_robust(prob, 4, opts);
  const RobustResult o = enumerate_oracle(prob, 4, opts);
  CHECK(r.mask.keep == o.mask.keep);
  CHECK(r.cost == o.cost);
  // Phasor plus two scalars (six ways) or all four scalars.
  CHECK(o.nodes_explored == 7);
  CHECK(r.mask.keep == std::vector<int>{0, 1, 1, 1, 1});
  CHECK(distance_inf(r.state, oracle::two_bus_truth()) < 1e-3);
}

TEST_CASE("search agrees with exhaustive enumeration on random instances") {
  for (std::uint64_t seed : {11u, 12u, 13u, 14u, 15u, 16u}) {
    CAPTURE(seed);
    const auto [prob, bad] = random_instance(seed, seed % 2 == 0);
    const int total = prob.measurements.total_budget_weight();
    const int d = total - budget_weight(prob.measurements.entries[bad].kind);
    RobustOptions opts = exact_opts(6, seed);
    const RobustResult r = solve_robust(prob, d, opts);
    const RobustResult o = enumerate_oracle(prob, d, opts);
    CHECK(r.mask.keep == o.mask.keep);
    CHECK(std::abs(r.cost - o.cost) <= 1e-6);
    CHECK(r.proven);
    CHECK(r.bound_gap == 0.0);
    CHECK(o.mask.keep[bad] == 0);
  }
}

TEST_CASE("exact ties break toward the lexicographically smallest mask") {
  EstimationProblem prob = oracle::two_bus_problem();
  // Duplicate the voltage channel; with single-start inner solves the two
  // drop choices evaluate bitwise identically.
  prob.measurements.entries.insert(prob.measurements.entries.begin(),
                                   prob.measurements.entries[0]);
  const RobustOptions opts = exact_opts(1);
  const RobustResult o = enumerate_oracle(prob, 4, opts);
  CHECK(o.mask.keep[0] == 0);
  CHECK(o.mask.keep[1] == 1);
}

TEST_CASE("optimal cost is monotone in the budget") {
  EstimationProblem prob = oracle::two_bus_problem();
  Rng rng(5);
  for (Measurement& e : prob.measurements.entries)
    e.value += Complex(0.05 * rng.normal(), 0);
  const RobustOptions opts = exact_opts();
  Real last = std::numeric_limits<Real>::infinity();
  for (int d : {4, 3, 2}) {
    const Real c = enumerate_oracle(prob, d, opts).cost;
    CHECK(c <= last + 1e-12);
    last = c;
  }
}

TEST_CASE("budget validation") {
  const EstimationProblem prob = oracle::two_bus_problem();
  const RobustOptions opts = exact_opts();
  CHECK_THROWS_AS(solve_robust(prob, 0, opts), config_error);
  CHECK_THROWS_AS(solve_robust(prob, 5, opts), config_error);
  CHECK_THROWS_AS(enumerate_oracle(prob, -1, opts), config_error);

  // All-phasor sets can only spend even budgets exactly.
  const Network net = oracle::two_bus_network();
  const MeasurementMatrices mm = build_measurement_matrices(net);
  const MeasurementSet ms = make_clean_measurements(
      mm, oracle::two_bus_truth(),
      {{MeasKind::pmu_voltage, 0}, {MeasKind::pmu_voltage, 1}});
  const EstimationProblem pmu_prob = make_problem(net, ms);
  CHECK_THROWS_AS(solve_robust(pmu_prob, 3, opts), config_error);
  RobustOptions ge = opts;
  ge.at_least = true;
  const RobustResult r = enumerate_oracle(pmu_prob, 3, ge);
  CHECK(r.mask.spent(pmu_prob.measurements) == 4);
}

TEST_CASE("at-least budgets never cost more than exact ones") {
  const EstimationProblem prob = overdetermined_problem(1, 3.0);
  RobustOptions opts = exact_opts();
  const Real exact = enumerate_oracle(prob, 4, opts).cost;
  opts.at_least = true;
  const RobustResult ge = enumerate_oracle(prob, 4, opts);
  CHECK(ge.cost <= exact + 1e-15);
  CHECK(ge.mask.keep[1] == 0);
}

TEST_CASE("enumeration refuses oversized instances") {
  const CaseFile cf = load_case(GRIDSTATE_DATA_DIR "/case14.m");
  const MeasurementMatrices mm = build_measurement_matrices(cf.network);
  const MeasurementSet ms = make_clean_measurements(
      mm, cf.state, default_measurement_plan(cf.network));
  const EstimationProblem prob = make_problem(cf.network, ms);
  CHECK_THROWS_AS(enumerate_oracle(prob, 40, exact_opts()), config_error);
}

TEST_CASE("time limit returns the incumbent with a gap, not an error") {
  const auto [prob, bad] = random_instance(21, false);
  RobustOptions opts = exact_opts(4, 21);
  opts.time_limit = 1e-9;
  const RobustResult r = solve_robust(
      prob, prob.measurements.total_budget_weight() - 1, opts);
  CHECK_FALSE(r.proven);
  CHECK(r.bound_gap >= 0.0);
  CHECK(r.cost < std::numeric_limits<Real>::infinity());
  CHECK(r.mask.spent(prob.measurements) ==
        prob.measurements.total_budget_weight() - 1);
}

TEST_CASE("identical calls give identical results") {
  const auto [prob, bad] = random_instance(31, true);
  const int d = prob.measurements.total_budget_weight() - 2;
  const RobustOptions opts = exact_opts(4, 9);
  const RobustResult a = solve_robust(prob, d, opts);
  const RobustResult b = solve_robust(prob, d, opts);
  CHECK(a.cost == b.cost);
  CHECK(a.mask.keep == b.mask.keep);
  CHECK((a.state - b.state).norm() == 0.0);
  CHECK(a.nodes_explored == b.nodes_explored);
}

TEST_CASE("price relaxation keeps everything when dropping is expensive") {
  const EstimationProblem prob = outlier_problem(2, 2.0);
  LassoOptions opts;
  opts.seed = 3;
  opts.wls.ftol = 1e-12;
  const LassoResult big = solve_lasso(prob, 1e6, opts);
  CHECK(big.converged);
  CHECK(big.selection.minCoeff() == 1.0);
  const EstimateResult m = multistart(prob, opts.starts, opts.seed, opts.wls);
  CHECK(std::abs(big.data_cost - m.cost) < 1e-9);
  CHECK(big.penalized_cost == big.data_cost);
}

TEST_CASE("price relaxation drops everything when keeping is expensive") {
  EstimationProblem prob = oracle::two_bus_problem();
  Rng rng(8);
  for (Measurement& e : prob.measurements.entries)
    e.value += Complex(0.2 * rng.normal(), 0);
  LassoOptions opts;
  opts.seed = 3;
  const Real r = 1e-12;
  const LassoResult out = solve_lasso(prob, r, opts);
  CHECK(out.selection.maxCoeff() == 0.0);
  CHECK(out.data_cost == 0.0);
  CHECK(out.penalized_cost ==
        doctest::Approx(r * prob.measurements.total_budget_weight()));
}

TEST_CASE("price between residual levels isolates the outlier") {
  const int bad = 1;
  const EstimationProblem prob = overdetermined_problem(bad, 3.0);
  // Residual levels at the robust fit: the corrupted entry far above, the
  // clean ones at solver-noise scale. A price between the two makes the
  // isolating selection a fixed point of the alternation.
  const RobustResult clean_fit = solve_robust(prob, 4, exact_opts());
  REQUIRE(clean_fit.mask.keep[bad] == 0);
  const VectorXr t = objective_terms(prob, clean_fit.state);
  Real clean_max = 0;
  for (int j = 0; j < t.size(); ++j)
    if (j != bad) clean_max = std::max(clean_max, t[j]);
  REQUIRE(t[bad] > clean_max * 1e3);
  const Real r = std::sqrt(t[bad] * std::max(clean_max, 1e-18));

  LassoOptions opts;
  opts.seed = 3;
  opts.wls.ftol = 1e-12;
  opts.init = clean_fit.state;
  const LassoResult out = solve_lasso(prob, r, opts);
  CHECK(out.converged);
  CHECK(out.selection[bad] == 0.0);
  for (int j = 0; j < out.selection.size(); ++j)
    if (j != bad) CHECK(out.selection[j] == 1.0);
  CHECK(distance_inf(out.state, oracle::two_bus_truth()) < 1e-3);
}

TEST_CASE("price relaxation fixed points are integral") {
  for (std::uint64_t seed : {41u, 42u, 43u}) {
    CAPTURE(seed);
    const auto [prob, bad] = random_instance(seed, true);
    const LassoResult out = solve_lasso(prob, 0.01, LassoOptions{});
    for (int j = 0; j < out.selection.size(); ++j) {
      const Real s = out.selection[j];
      CHECK((s == 0.0 || s == 1.0));
    }
  }
}

TEST_CASE("nonpositive prices are rejected") {
  const EstimationProblem prob = oracle::two_bus_problem();
  CHECK_THROWS_AS(solve_lasso(prob, 0.0, {}), config_error);
  CHECK_THROWS_AS(solve_lasso(prob, -1.0, {}), config_error);
}
