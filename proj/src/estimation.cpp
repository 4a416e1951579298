#include "gridstate/estimation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <future>
#include <thread>
#include <vector>

#include "gridstate/rng.hpp"

namespace gridstate {

namespace {

constexpr Real kPi = 3.14159265358979323846;
constexpr Complex kI{0.0, 1.0};

struct Channels {
  VectorXc i_bus;   // Y v
  VectorXc i_from;  // Yf v
  VectorXc i_to;    // Yt v
};

Channels eval_channels(const EstimationProblem& prob, const StateVector& v) {
  Channels c;
  c.i_bus = prob.matrices.y * v;
  if (prob.matrices.yf.rows() > 0) {
    c.i_from = prob.matrices.yf * v;
    c.i_to = prob.matrices.yt * v;
  }
  return c;
}

}  // namespace

Real ObjectiveWeights::of(MeasKind kind) const {
  switch (kind) {
    case MeasKind::pmu_voltage:
      return pmu_voltage;
    case MeasKind::pmu_current_injection:
      return pmu_current;
    case MeasKind::pmu_current_flow_from:
    case MeasKind::pmu_current_flow_to:
      return pmu_flow;
    case MeasKind::scada_voltage_mag:
      return scada_voltage;
    default:
      return scada_pq;
  }
}

EstimationProblem make_problem(const Network& net, MeasurementSet ms,
                               ObjectiveWeights weights) {
  EstimationProblem prob;
  prob.net = net;
  prob.matrices = build_measurement_matrices(net);
  const int n_bus = net.bus_count();
  const int n_br = net.branch_count();
  for (const Measurement& e : ms.entries) {
    const int limit = is_branch_kind(e.kind) ? n_br : n_bus;
    if (e.target < 0 || e.target >= limit)
      throw config_error("measurement target out of range");
    if (!(e.weight > 0)) throw config_error("measurement weight must be > 0");
  }
  prob.measurements = std::move(ms);
  prob.weights = weights;
  return prob;
}

VectorXr state_to_params(const StateVector& v, int ref) {
  const int n = static_cast<int>(v.size());
  VectorXr x(2 * n - 1);
  int at = 0;
  for (int i = 0; i < n; ++i)
    if (i != ref) x[at++] = v[i].real();
  for (int i = 0; i < n; ++i)
    if (i != ref) x[at++] = v[i].imag();
  x[at] = v[ref].real();
  return x;
}

StateVector params_to_state(const VectorXr& x, int ref) {
  const int n = (static_cast<int>(x.size()) + 1) / 2;
  StateVector v(n);
  int at = 0;
  for (int i = 0; i < n; ++i)
    if (i != ref) v[i].real(x[at++]);
  for (int i = 0; i < n; ++i)
    if (i != ref) v[i].imag(x[at++]);
  v[ref] = Complex(x[at], 0.0);
  return v;
}

StateVector flat_start(int n) {
  return StateVector::Constant(n, Complex(1.0, 0.0));
}

namespace {

// Residual term of one entry, class and entry weights applied, selection not.
// objective_cost is the selection-weighted sum of these.
Real entry_term(const EstimationProblem& prob, const Channels& ch,
                const StateVector& v, const Measurement& e) {
  const Real c = prob.weights.of(e.kind) * e.weight;
  const int t = e.target;
  switch (e.kind) {
    case MeasKind::scada_voltage_mag: {
      const Real rho = std::norm(v[t]) - e.value.real() * e.value.real();
      return c * rho * rho;
    }
    case MeasKind::scada_p_injection:
    case MeasKind::scada_q_injection: {
      const Complex s = v[t] * std::conj(ch.i_bus[t]);
      const Real h =
          e.kind == MeasKind::scada_p_injection ? s.real() : s.imag();
      const Real rho = h - e.value.real();
      return c * rho * rho;
    }
    case MeasKind::scada_p_flow_from:
    case MeasKind::scada_q_flow_from: {
      const Complex s =
          v[prob.matrices.branch_from[t]] * std::conj(ch.i_from[t]);
      const Real h =
          e.kind == MeasKind::scada_p_flow_from ? s.real() : s.imag();
      const Real rho = h - e.value.real();
      return c * rho * rho;
    }
    case MeasKind::scada_p_flow_to:
    case MeasKind::scada_q_flow_to: {
      const Complex s = v[prob.matrices.branch_to[t]] * std::conj(ch.i_to[t]);
      const Real h =
          e.kind == MeasKind::scada_p_flow_to ? s.real() : s.imag();
      const Real rho = h - e.value.real();
      return c * rho * rho;
    }
    case MeasKind::pmu_voltage:
      return c * std::norm(v[t] - e.value);
    case MeasKind::pmu_current_injection:
      return c * std::norm(ch.i_bus[t] - e.value);
    case MeasKind::pmu_current_flow_from:
      return c * std::norm(ch.i_from[t] - e.value);
    case MeasKind::pmu_current_flow_to:
      return c * std::norm(ch.i_to[t] - e.value);
  }
  return 0.0;
}

}  // namespace

Real objective_cost(const EstimationProblem& prob, const StateVector& v) {
  const Channels ch = eval_channels(prob, v);
  Real cost = 0.0;
  const auto& entries = prob.measurements.entries;
  for (int j = 0; j < static_cast<int>(entries.size()); ++j) {
    const Real s = prob.selection_of(j);
    if (s == 0.0) continue;
    cost += s * entry_term(prob, ch, v, entries[j]);
  }
  return cost;
}

VectorXr objective_terms(const EstimationProblem& prob, const StateVector& v) {
  const Channels ch = eval_channels(prob, v);
  const auto& entries = prob.measurements.entries;
  VectorXr terms(static_cast<int>(entries.size()));
  for (int j = 0; j < static_cast<int>(entries.size()); ++j)
    terms[j] = entry_term(prob, ch, v, entries[j]);
  return terms;
}

VectorXr objective_gradient(const EstimationProblem& prob,
                            const StateVector& v) {
  const Channels ch = eval_channels(prob, v);
  const int n = prob.net.bus_count();
  const int m = prob.net.branch_count();
  // u accumulates the conjugate-coordinate derivative; a, bf, bt collect the
  // coefficients of conjugated admittance rows so that one adjoint product
  // per matrix finishes the assembly.
  VectorXc u = VectorXc::Zero(n);
  VectorXc a = VectorXc::Zero(n);
  VectorXc bf = VectorXc::Zero(m);
  VectorXc bt = VectorXc::Zero(m);

  const auto& entries = prob.measurements.entries;
  for (int j = 0; j < static_cast<int>(entries.size()); ++j) {
    const Measurement& e = entries[j];
    const Real c =
        prob.weights.of(e.kind) * e.weight * prob.selection_of(j);
    if (c == 0.0) continue;
    const int t = e.target;
    switch (e.kind) {
      case MeasKind::scada_voltage_mag: {
        const Real rho = std::norm(v[t]) - e.value.real() * e.value.real();
        u[t] += 2.0 * c * rho * v[t];
        break;
      }
      case MeasKind::scada_p_injection: {
        const Real rho = (v[t] * std::conj(ch.i_bus[t])).real() -
                         e.value.real();
        a[t] += c * rho * v[t];
        u[t] += c * rho * ch.i_bus[t];
        break;
      }
      case MeasKind::scada_q_injection: {
        const Real rho = (v[t] * std::conj(ch.i_bus[t])).imag() -
                         e.value.real();
        a[t] -= kI * (c * rho * v[t]);
        u[t] += kI * (c * rho * ch.i_bus[t]);
        break;
      }
      case MeasKind::scada_p_flow_from: {
        const int b = prob.matrices.branch_from[t];
        const Real rho = (v[b] * std::conj(ch.i_from[t])).real() -
                         e.value.real();
        bf[t] += c * rho * v[b];
        u[b] += c * rho * ch.i_from[t];
        break;
      }
      case MeasKind::scada_q_flow_from: {
        const int b = prob.matrices.branch_from[t];
        const Real rho = (v[b] * std::conj(ch.i_from[t])).imag() -
                         e.value.real();
        bf[t] -= kI * (c * rho * v[b]);
        u[b] += kI * (c * rho * ch.i_from[t]);
        break;
      }
      case MeasKind::scada_p_flow_to: {
        const int b = prob.matrices.branch_to[t];
        const Real rho = (v[b] * std::conj(ch.i_to[t])).real() -
                         e.value.real();
        bt[t] += c * rho * v[b];
        u[b] += c * rho * ch.i_to[t];
        break;
      }
      case MeasKind::scada_q_flow_to: {
        const int b = prob.matrices.branch_to[t];
        const Real rho = (v[b] * std::conj(ch.i_to[t])).imag() -
                         e.value.real();
        bt[t] -= kI * (c * rho * v[b]);
        u[b] += kI * (c * rho * ch.i_to[t]);
        break;
      }
      case MeasKind::pmu_voltage:
        u[t] += c * (v[t] - e.value);
        break;
      case MeasKind::pmu_current_injection:
        a[t] += c * (ch.i_bus[t] - e.value);
        break;
      case MeasKind::pmu_current_flow_from:
        bf[t] += c * (ch.i_from[t] - e.value);
        break;
      case MeasKind::pmu_current_flow_to:
        bt[t] += c * (ch.i_to[t] - e.value);
        break;
    }
  }

  u += prob.matrices.y.adjoint() * a;
  if (m > 0) {
    u += prob.matrices.yf.adjoint() * bf;
    u += prob.matrices.yt.adjoint() * bt;
  }

  const int ref = prob.net.reference_bus();
  VectorXr g(2 * n - 1);
  int at = 0;
  for (int i = 0; i < n; ++i)
    if (i != ref) g[at++] = 2.0 * u[i].real();
  for (int i = 0; i < n; ++i)
    if (i != ref) g[at++] = 2.0 * u[i].imag();
  g[at] = 2.0 * u[ref].real();
  return g;
}

EstimateResult estimate_wls(const EstimationProblem& prob,
                            const StateVector& init, const WlsOptions& opts) {
  const int ref = prob.net.reference_bus();
  VectorXr x = state_to_params(init, ref);

  auto fval = [&](const VectorXr& p) {
    return objective_cost(prob, params_to_state(p, ref));
  };
  auto gval = [&](const VectorXr& p) {
    return objective_gradient(prob, params_to_state(p, ref));
  };

  Real f = fval(x);
  VectorXr g = gval(x);

  EstimateResult out;
  out.iterations = 0;
  if (g.cwiseAbs().maxCoeff() <= opts.gtol) {
    out.state = params_to_state(x, ref);
    out.cost = f;
    out.converged = true;
    return out;
  }

  std::deque<std::pair<VectorXr, VectorXr>> history;  // (s, y) pairs
  bool converged = false;
  int iter = 0;
  while (iter < opts.max_iterations) {
    // Two-loop recursion over the stored curvature pairs.
    VectorXr d = -g;
    if (!history.empty()) {
      std::vector<Real> alpha(history.size());
      for (int h = static_cast<int>(history.size()) - 1; h >= 0; --h) {
        const auto& [s, yv] = history[h];
        alpha[h] = s.dot(d) / yv.dot(s);
        d -= alpha[h] * yv;
      }
      const auto& [s_last, y_last] = history.back();
      d *= y_last.dot(s_last) / y_last.squaredNorm();
      for (size_t h = 0; h < history.size(); ++h) {
        const auto& [s, yv] = history[h];
        const Real beta = yv.dot(d) / yv.dot(s);
        d += (alpha[h] - beta) * s;
      }
    }
    Real slope = g.dot(d);
    if (!(slope < 0)) {
      d = -g;
      slope = g.dot(d);
      history.clear();
    }

    // Strong Wolfe line search (sufficient decrease + curvature), needed for
    // the quasi-Newton direction to keep its unit-step scaling near optima.
    const Real c1 = opts.armijo_c;
    const Real c2 = 0.9;
    Real f_new = f;
    VectorXr x_new = x;
    VectorXr g_new = g;
    bool accepted = false;

    auto eval_at = [&](Real a) {
      x_new = x + a * d;
      f_new = fval(x_new);
      g_new = gval(x_new);
      return g_new.dot(d);
    };
    auto zoom = [&](Real lo, Real f_lo, Real hi) {
      for (int z = 0; z < 50 && std::abs(hi - lo) > 1e-16; ++z) {
        const Real a = 0.5 * (lo + hi);
        const Real da = eval_at(a);
        if (f_new > f + c1 * a * slope || f_new >= f_lo) {
          hi = a;
        } else {
          if (std::abs(da) <= -c2 * slope) return true;
          if (da * (hi - lo) >= 0) hi = lo;
          lo = a;
          f_lo = f_new;
        }
      }
      // Interval collapsed; settle for sufficient decrease at the low end.
      eval_at(lo);
      return f_new <= f + c1 * lo * slope;
    };

    Real a_prev = 0.0, f_prev = f, a = 1.0;
    for (int ls = 0; ls < 20; ++ls) {
      const Real da = eval_at(a);
      if (f_new > f + c1 * a * slope || (ls > 0 && f_new >= f_prev)) {
        accepted = zoom(a_prev, f_prev, a);
        break;
      }
      if (std::abs(da) <= -c2 * slope) {
        accepted = true;
        break;
      }
      if (da >= 0) {
        accepted = zoom(a, f_new, a_prev);
        break;
      }
      a_prev = a;
      f_prev = f_new;
      a *= 2.0;
    }
    if (!accepted) {
      // Wolfe bracketing failed (flat or noisy scale); plain backtracking.
      for (Real bt_step = 1.0; bt_step > 1e-18; bt_step *= 0.5) {
        x_new = x + bt_step * d;
        f_new = fval(x_new);
        if (f_new <= f + c1 * bt_step * slope) {
          g_new = gval(x_new);
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) break;  // no usable descent left at this scale
    const VectorXr s = x_new - x;
    const VectorXr yv = g_new - g;
    if (yv.dot(s) > 1e-12 * s.norm() * yv.norm())
      history.emplace_back(s, yv);
    while (static_cast<int>(history.size()) > opts.memory)
      history.pop_front();

    ++iter;
    const Real denom = std::max({std::abs(f), std::abs(f_new), Real(1)});
    const bool f_done = std::abs(f - f_new) / denom <= opts.ftol;
    x = x_new;
    f = f_new;
    g = g_new;
    if (f_done || g.cwiseAbs().maxCoeff() <= opts.gtol) {
      converged = true;
      break;
    }
  }

  out.state = params_to_state(x, ref);
  out.cost = f;
  out.iterations = iter;
  out.converged = converged;
  return out;
}

StateVector random_start(int n, int ref, std::uint64_t seed) {
  Rng rng(seed);
  StateVector v(n);
  for (int i = 0; i < n; ++i) {
    const Real mag = rng.uniform(0.8, 1.2);
    const Real ang = rng.uniform(-kPi / 6.0, kPi / 6.0);
    v[i] = std::polar(mag, ang);
  }
  v[ref] = Complex(std::abs(v[ref]), 0.0);
  return v;
}

EstimateResult multistart(const EstimationProblem& prob, int k,
                          std::uint64_t seed, const WlsOptions& opts) {
  if (k < 1) throw config_error("multistart needs k >= 1");
  const int n = prob.net.bus_count();
  const int ref = prob.net.reference_bus();

  std::vector<EstimateResult> results(k);
  auto run_one = [&](int j) {
    const StateVector init =
        j == 0 ? flat_start(n) : random_start(n, ref, derive_seed(seed, j));
    results[j] = estimate_wls(prob, init, opts);
  };

  const int workers = std::min(thread_count(), k);
  if (workers <= 1) {
    for (int j = 0; j < k; ++j) run_one(j);
  } else {
    std::vector<std::future<void>> futs;
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w)
      futs.push_back(std::async(std::launch::async, [&]() {
        for (int j = next++; j < k; j = next++) run_one(j);
      }));
    for (auto& fut : futs) fut.get();
  }

  int best = 0;
  for (int j = 1; j < k; ++j)
    if (results[j].cost < results[best].cost) best = j;
  return results[best];
}

Real distance_sq(const StateVector& a, const StateVector& b) {
  return (a - b).squaredNorm();
}

Real distance_inf(const StateVector& a, const StateVector& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

int thread_count() {
  if (const char* env = std::getenv("GRIDSTATE_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace gridstate
