#include "gridstate/noise.hpp"

#include <cmath>
#include <complex>

#include "gridstate/rng.hpp"

namespace gridstate {

namespace {

// Substream labels; values are arbitrary but frozen by the reproducibility
// contract: changing them changes every simulated measurement.
enum : std::uint64_t {
  kStreamBusChain = 0x10,
  kStreamInjChain = 0x11,
  kStreamFromChain = 0x12,
  kStreamToChain = 0x13,
  kStreamEntry = 0x20,
  kStreamDrop = 0x21,
  kStreamFault = 0x22,
  kSysVtMag = 0x30,
  kSysVtAng = 0x31,
  kSysCtInjMag = 0x32,
  kSysCtInjAng = 0x33,
  kSysCtFromMag = 0x34,
  kSysCtFromAng = 0x35,
  kSysCtToMag = 0x36,
  kSysCtToAng = 0x37,
};

Real systematic_part(std::uint64_t fleet_seed, std::uint64_t site,
                     std::uint64_t id, Real bound) {
  Rng rng(derive_seed(derive_seed(fleet_seed, site), id));
  return rng.uniform(-bound / 2, bound / 2);
}

Real draw_gmm(Rng& rng, const std::vector<GmmComponent>& gmm) {
  const Real u = rng.uniform();
  Real cum = 0.0;
  size_t pick = gmm.size() - 1;
  for (size_t c = 0; c < gmm.size(); ++c) {
    cum += gmm[c].weight;
    if (u < cum) {
      pick = c;
      break;
    }
  }
  return gmm[pick].mean + gmm[pick].std * rng.normal();
}

// Perturbation of one magnitude/angle pair, expressed relative to the true
// phasor: value'' = value * ratio * e^(i delta). The relative form keeps the
// zero-error case bitwise exact.
struct ChainDraw {
  Real ratio = 1.0;
  Real delta = 0.0;
};

// VT/CT ratio stage plus cable stage for magnitude and angle. `sys_*` are the
// per-sensor systematic halves, `bound` the accuracy-class bound.
ChainDraw draw_chain(Rng& rng, Real true_mag, Real bound, Real sys_mag,
                     Real sys_ang, const ErrorChainConfig& cfg) {
  const Real e_ratio = sys_mag + rng.uniform(-bound / 2, bound / 2);
  const Real e_cab = cfg.cab_mean + cfg.cab_std * rng.normal();
  const Real e_ang = sys_ang + rng.uniform(-bound / 2, bound / 2);
  const Real e_cab_ang = cfg.cab_mean + cfg.cab_std * rng.normal();
  ChainDraw d;
  // (1+e)|m| + e_cab as a ratio; fall back to an absolute floor at |m| = 0.
  d.ratio = true_mag > 0 ? (1.0 + e_ratio) + e_cab / true_mag
                         : 1.0 + e_ratio + e_cab;
  d.delta = e_ang + e_cab_ang;
  return d;
}

Complex rotor(const ChainDraw& d) {
  return d.ratio * Complex(std::cos(d.delta), std::sin(d.delta));
}

bool is_scada(MeasKind k) { return !is_pmu(k); }

}  // namespace

void validate(const ErrorChainConfig& cfg) {
  if (cfg.vt_ratio_bound < 0 || cfg.ct_ratio_bound < 0)
    throw config_error("error chain: transformer bounds must be >= 0");
  if (cfg.cab_std < 0 || cfg.ied_std < 0)
    throw config_error("error chain: stds must be >= 0");
  if (cfg.cn_gmm.empty())
    throw config_error("error chain: mixture needs at least one component");
  Real total = 0.0;
  for (const GmmComponent& c : cfg.cn_gmm) {
    if (c.weight <= 0) throw config_error("error chain: mixture weights must be > 0");
    if (c.std < 0) throw config_error("error chain: mixture stds must be >= 0");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw config_error("error chain: mixture weights must sum to 1");
  if (cfg.drop_probability < 0 || cfg.drop_probability > 1)
    throw config_error("error chain: drop probability outside [0, 1]");
}

MeasurementSet simulate_measurements(const MeasurementMatrices& mm,
                                     const StateVector& v_true,
                                     const MeasurementPlan& plan,
                                     const ErrorChainConfig& cfg,
                                     std::uint64_t seed) {
  validate(cfg);
  const int n = static_cast<int>(v_true.size());
  const int m = static_cast<int>(mm.flow_pf.size());

  // True phasors along the same evaluation path the estimators use, so the
  // zero-error configuration reproduces clean values bitwise.
  VectorXc i_inj(n), i_from(m), i_to(m);
  for (int k = 0; k < n; ++k)
    i_inj[k] = evaluate_h(mm, v_true, MeasKind::pmu_current_injection, k);
  for (int l = 0; l < m; ++l) {
    i_from[l] = evaluate_h(mm, v_true, MeasKind::pmu_current_flow_from, l);
    i_to[l] = evaluate_h(mm, v_true, MeasKind::pmu_current_flow_to, l);
  }

  // One chain draw per bus voltage and per current source, shared by every
  // channel reading it, exactly like the shared instrument in the field.
  std::vector<ChainDraw> bus(n), inj(n), from(m), to(m);
  for (int k = 0; k < n; ++k) {
    Rng rng(derive_seed(derive_seed(seed, kStreamBusChain), k));
    bus[k] = draw_chain(rng, std::abs(v_true[k]), cfg.vt_ratio_bound,
                        systematic_part(cfg.systematic_seed, kSysVtMag, k,
                                        cfg.vt_ratio_bound),
                        systematic_part(cfg.systematic_seed, kSysVtAng, k,
                                        cfg.vt_ratio_bound),
                        cfg);
  }
  for (int k = 0; k < n; ++k) {
    Rng rng(derive_seed(derive_seed(seed, kStreamInjChain), k));
    inj[k] = draw_chain(rng, std::abs(i_inj[k]), cfg.ct_ratio_bound,
                        systematic_part(cfg.systematic_seed, kSysCtInjMag, k,
                                        cfg.ct_ratio_bound),
                        systematic_part(cfg.systematic_seed, kSysCtInjAng, k,
                                        cfg.ct_ratio_bound),
                        cfg);
  }
  for (int l = 0; l < m; ++l) {
    Rng rf(derive_seed(derive_seed(seed, kStreamFromChain), l));
    from[l] = draw_chain(rf, std::abs(i_from[l]), cfg.ct_ratio_bound,
                         systematic_part(cfg.systematic_seed, kSysCtFromMag, l,
                                         cfg.ct_ratio_bound),
                         systematic_part(cfg.systematic_seed, kSysCtFromAng, l,
                                         cfg.ct_ratio_bound),
                         cfg);
    Rng rt(derive_seed(derive_seed(seed, kStreamToChain), l));
    to[l] = draw_chain(rt, std::abs(i_to[l]), cfg.ct_ratio_bound,
                       systematic_part(cfg.systematic_seed, kSysCtToMag, l,
                                       cfg.ct_ratio_bound),
                       systematic_part(cfg.systematic_seed, kSysCtToAng, l,
                                       cfg.ct_ratio_bound),
                       cfg);
  }

  // s'' = v'' conj(i''): the complex power reconstructed from the perturbed
  // magnitude/angle pairs, as a rotation of the true one.
  auto perturbed_power = [&](int bus_k, const ChainDraw& cur, Complex s_true) {
    return s_true * (bus[bus_k].ratio * cur.ratio *
                     Complex(std::cos(bus[bus_k].delta - cur.delta),
                             std::sin(bus[bus_k].delta - cur.delta)));
  };
  auto true_power = [&](MeasKind pk, MeasKind qk, int t) {
    return Complex(evaluate_h(mm, v_true, pk, t).real(),
                   evaluate_h(mm, v_true, qk, t).real());
  };

  MeasurementSet out;
  out.entries.reserve(plan.size());
  for (const auto& [kind, target] : plan) {
    if (cfg.drop_probability > 0) {
      Rng drop(derive_seed(derive_seed(derive_seed(seed, kStreamDrop),
                                       static_cast<std::uint64_t>(kind)),
                           target));
      if (drop.uniform() < cfg.drop_probability) continue;
    }
    Rng rng(derive_seed(derive_seed(derive_seed(seed, kStreamEntry),
                                    static_cast<std::uint64_t>(kind)),
                        target));

    Measurement meas;
    meas.kind = kind;
    meas.target = target;

    auto scalar_tail = [&](Real raw) {
      return Complex(raw + cfg.ied_std * rng.normal() +
                         draw_gmm(rng, cfg.cn_gmm),
                     0.0);
    };
    switch (kind) {
      case MeasKind::scada_voltage_mag:
        meas.value = scalar_tail(std::abs(v_true[target]) * bus[target].ratio);
        break;
      case MeasKind::scada_p_injection:
        meas.value = scalar_tail(
            perturbed_power(target, inj[target],
                            true_power(MeasKind::scada_p_injection,
                                       MeasKind::scada_q_injection, target))
                .real());
        break;
      case MeasKind::scada_q_injection:
        meas.value = scalar_tail(
            perturbed_power(target, inj[target],
                            true_power(MeasKind::scada_p_injection,
                                       MeasKind::scada_q_injection, target))
                .imag());
        break;
      case MeasKind::scada_p_flow_from:
      case MeasKind::scada_q_flow_from: {
        const Complex s =
            perturbed_power(mm.branch_from[target], from[target],
                            true_power(MeasKind::scada_p_flow_from,
                                       MeasKind::scada_q_flow_from, target));
        meas.value = scalar_tail(kind == MeasKind::scada_p_flow_from ? s.real()
                                                                     : s.imag());
        break;
      }
      case MeasKind::scada_p_flow_to:
      case MeasKind::scada_q_flow_to: {
        const Complex s =
            perturbed_power(mm.branch_to[target], to[target],
                            true_power(MeasKind::scada_p_flow_to,
                                       MeasKind::scada_q_flow_to, target));
        meas.value = scalar_tail(kind == MeasKind::scada_p_flow_to ? s.real()
                                                                   : s.imag());
        break;
      }
      case MeasKind::pmu_voltage:
        meas.value = v_true[target] * rotor(bus[target]);
        break;
      case MeasKind::pmu_current_injection:
        meas.value = i_inj[target] * rotor(inj[target]);
        break;
      case MeasKind::pmu_current_flow_from:
        meas.value = i_from[target] * rotor(from[target]);
        break;
      case MeasKind::pmu_current_flow_to:
        meas.value = i_to[target] * rotor(to[target]);
        break;
    }
    out.entries.push_back(meas);
  }
  return out;
}

MeasurementSet simulate_scada(const MeasurementMatrices& mm,
                              const StateVector& v_true,
                              const MeasurementPlan& plan,
                              const ErrorChainConfig& cfg, std::uint64_t seed) {
  for (const auto& [kind, target] : plan)
    if (!is_scada(kind))
      throw config_error("simulate_scada: plan contains a phasor channel");
  return simulate_measurements(mm, v_true, plan, cfg, seed);
}

MeasurementSet simulate_pmu(const MeasurementMatrices& mm,
                            const StateVector& v_true,
                            const MeasurementPlan& plan,
                            const ErrorChainConfig& cfg, std::uint64_t seed) {
  for (const auto& [kind, target] : plan)
    if (!is_pmu(kind))
      throw config_error("simulate_pmu: plan contains a scalar channel");
  return simulate_measurements(mm, v_true, plan, cfg, seed);
}

MeasurementSet inject_faults(const MeasurementSet& ms, Real p_f,
                             std::uint64_t seed) {
  if (p_f < 0 || p_f > 1)
    throw config_error("inject_faults: probability outside [0, 1]");
  MeasurementSet out = ms;
  for (size_t j = 0; j < out.entries.size(); ++j) {
    Measurement& e = out.entries[j];
    Rng rng(derive_seed(derive_seed(seed, kStreamFault), j));
    e.faulty = rng.uniform() < p_f;
    const Real var = (e.faulty ? 100.0 : 0.1) *
                     std::max(std::abs(e.value), Real(1e-4));
    const Real sigma = std::sqrt(var);
    if (is_pmu(e.kind))
      e.value += Complex(sigma * rng.normal(), sigma * rng.normal());
    else
      e.value += Complex(sigma * rng.normal(), 0.0);
  }
  return out;
}

}  // namespace gridstate
