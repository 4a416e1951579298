#include "gridstate/sdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <tuple>
#include <utility>

namespace gridstate {

MultiIndex multi_add(const MultiIndex& a, const MultiIndex& b) {
  if (a.size() != b.size())
    throw config_error("multi-index length mismatch");
  MultiIndex out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

int multi_degree(const MultiIndex& a) {
  int d = 0;
  for (int e : a) d += e;
  return d;
}

int Polynomial::degree() const {
  int d = 0;
  for (const auto& [alpha, value] : terms) d = std::max(d, multi_degree(alpha));
  return d;
}

Real& Polynomial::coeff(const MultiIndex& alpha) { return terms[alpha]; }

void Polynomial::add(const MultiIndex& alpha, Real value) {
  terms[alpha] += value;
}

Real Polynomial::evaluate(const VectorXr& x) const {
  Real out = 0;
  for (const auto& [alpha, value] : terms) {
    Real mono = value;
    for (std::size_t i = 0; i < alpha.size(); ++i)
      for (int e = 0; e < alpha[i]; ++e) mono *= x[static_cast<int>(i)];
    out += mono;
  }
  return out;
}

int MonomialBasis::index_of(const MultiIndex& alpha) const {
  const auto it = position.find(alpha);
  if (it == position.end())
    throw config_error("moment index of degree " +
                       std::to_string(multi_degree(alpha)) +
                       " is outside the basis of order " +
                       std::to_string(degree));
  return it->second;
}

MonomialBasis build_basis(int n_vars, int degree) {
  if (n_vars < 1) throw config_error("basis needs at least one variable");
  if (degree < 0) throw config_error("basis degree must be nonnegative");
  Real count = 1;  // C(n_vars + degree, degree)
  for (int i = 1; i <= degree; ++i) count *= Real(n_vars + i) / Real(i);
  if (count > 1e5 + 0.5)
    throw config_error("monomial basis would exceed 1e5 entries");

  MonomialBasis basis;
  basis.n_vars = n_vars;
  basis.degree = degree;
  MultiIndex cur(n_vars, 0);
  const auto emit = [&basis](const MultiIndex& alpha) {
    basis.position.emplace(alpha, basis.size());
    basis.monomials.push_back(alpha);
  };
  // Within a degree: leading variables take the largest exponent first.
  const auto gen = [&](auto&& self, int var, int remaining) -> void {
    if (var == n_vars - 1) {
      cur[var] = remaining;
      emit(cur);
      cur[var] = 0;
      return;
    }
    for (int e = remaining; e >= 0; --e) {
      cur[var] = e;
      self(self, var + 1, remaining - e);
    }
    cur[var] = 0;
  };
  for (int d = 0; d <= degree; ++d) gen(gen, 0, d);
  return basis;
}

VectorXr point_moments(const MonomialBasis& basis, const VectorXr& x) {
  if (x.size() != basis.n_vars)
    throw config_error("point dimension does not match the basis");
  VectorXr y(basis.size());
  for (int k = 0; k < basis.size(); ++k) {
    Real mono = 1;
    const MultiIndex& alpha = basis.monomials[k];
    for (int i = 0; i < basis.n_vars; ++i)
      for (int e = 0; e < alpha[i]; ++e) mono *= x[i];
    y[k] = mono;
  }
  return y;
}

MatrixXr moment_matrix(const MonomialBasis& row_basis,
                       const MonomialBasis& y_basis, const VectorXr& y) {
  Polynomial one;
  one.add(MultiIndex(row_basis.n_vars, 0), 1.0);
  return localizing_matrix(one, row_basis, y_basis, y);
}

MatrixXr localizing_matrix(const Polynomial& g, const MonomialBasis& row_basis,
                           const MonomialBasis& y_basis, const VectorXr& y) {
  if (y.size() != y_basis.size())
    throw config_error("moment vector does not match the moment basis");
  const int s = row_basis.size();
  MatrixXr m(s, s);
  for (int a = 0; a < s; ++a) {
    for (int b = a; b < s; ++b) {
      const MultiIndex ab =
          multi_add(row_basis.monomials[a], row_basis.monomials[b]);
      Real value = 0;
      for (const auto& [gamma, coeff] : g.terms)
        value += coeff * y[y_basis.index_of(multi_add(gamma, ab))];
      m(a, b) = value;
      m(b, a) = value;
    }
  }
  return m;
}

namespace {

// Linear expression over POP variables plus a constant.
struct Affine {
  std::vector<std::pair<int, Real>> lin;
  Real constant = 0;
};

MultiIndex unit_index(int n_vars, int var) {
  MultiIndex e(n_vars, 0);
  e[var] = 1;
  return e;
}

MultiIndex pair_index(int n_vars, int p, int q) {
  MultiIndex e(n_vars, 0);
  e[p] += 1;
  e[q] += 1;
  return e;
}

// f += c * (affine)^2
void add_square(Polynomial& f, const Affine& a, Real c, int n_vars) {
  for (std::size_t p = 0; p < a.lin.size(); ++p) {
    const auto& [vp, cp] = a.lin[p];
    for (std::size_t q = p; q < a.lin.size(); ++q) {
      const auto& [vq, cq] = a.lin[q];
      f.add(pair_index(n_vars, vp, vq), (p == q ? 1 : 2) * c * cp * cq);
    }
    if (a.constant != 0) f.add(unit_index(n_vars, vp), 2 * c * cp * a.constant);
  }
  if (a.constant != 0)
    f.add(MultiIndex(n_vars, 0), c * a.constant * a.constant);
}

// Re(v* H v) in the real layout; Im v_ref = 0 terms drop out.
Polynomial quad_form_poly(const MatrixXc& h, const EstimationPop& layout,
                          int n_vars) {
  Polynomial g;
  const int n = layout.n_bus;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Complex hij = h(i, j);
      if (hij == Complex(0, 0)) continue;
      const Real re = hij.real(), im = hij.imag();
      const bool bi = layout.vim[i] >= 0, bj = layout.vim[j] >= 0;
      if (re != 0) {
        g.add(pair_index(n_vars, layout.vre[i], layout.vre[j]), re);
        if (bi && bj) g.add(pair_index(n_vars, layout.vim[i], layout.vim[j]), re);
      }
      if (im != 0) {
        if (bj) g.add(pair_index(n_vars, layout.vre[i], layout.vim[j]), -im);
        if (bi) g.add(pair_index(n_vars, layout.vim[i], layout.vre[j]), im);
      }
    }
  }
  return g;
}

// Row of an admittance matrix for the phasor kinds.
const MatrixXc& phasor_matrix(const MeasurementMatrices& mm, MeasKind kind) {
  switch (kind) {
    case MeasKind::pmu_current_injection: return mm.y;
    case MeasKind::pmu_current_flow_from: return mm.yf;
    case MeasKind::pmu_current_flow_to: return mm.yt;
    default: throw config_error("not a current phasor kind");
  }
}

}  // namespace

EstimationPop build_estimation_pop(const EstimationProblem& prob) {
  const int n = prob.net.bus_count();
  EstimationPop out;
  out.n_bus = n;
  out.ref = prob.net.reference_bus();
  out.vre.resize(n);
  out.vim.assign(n, -1);
  for (int i = 0; i < n; ++i) out.vre[i] = i;
  int next = n;
  for (int i = 0; i < n; ++i)
    if (i != out.ref) out.vim[i] = next++;

  // One auxiliary variable per distinct selected SCADA quantity.
  std::map<std::pair<int, int>, int> aux_of;
  const auto& entries = prob.measurements.entries;
  for (int j = 0; j < static_cast<int>(entries.size()); ++j) {
    const Measurement& e = entries[j];
    if (prob.selection_of(j) == 0 || is_pmu(e.kind)) continue;
    const auto key = std::make_pair(static_cast<int>(e.kind), e.target);
    if (aux_of.emplace(key, next).second) {
      out.aux.emplace_back(e.kind, e.target);
      ++next;
    }
  }
  const int n_vars = next;
  out.pop.n_vars = n_vars;

  Polynomial& f = out.pop.objective;
  for (int j = 0; j < static_cast<int>(entries.size()); ++j) {
    const Measurement& e = entries[j];
    const Real sel = prob.selection_of(j);
    if (sel == 0) continue;
    const Real c = prob.weights.of(e.kind) * e.weight * sel;
    if (!is_pmu(e.kind)) {
      const int a = aux_of.at({static_cast<int>(e.kind), e.target});
      // Magnitude channels compare squared magnitudes, so the target is z^2.
      const Real z = e.kind == MeasKind::scada_voltage_mag
                         ? e.value.real() * e.value.real()
                         : e.value.real();
      Affine residual;
      residual.lin.emplace_back(a, 1.0);
      residual.constant = -z;
      add_square(f, residual, c, n_vars);
      continue;
    }
    Affine re, im;
    if (e.kind == MeasKind::pmu_voltage) {
      re.lin.emplace_back(out.vre[e.target], 1.0);
      if (out.vim[e.target] >= 0) im.lin.emplace_back(out.vim[e.target], 1.0);
    } else {
      const MatrixXc& rows = phasor_matrix(prob.matrices, e.kind);
      for (int i = 0; i < n; ++i) {
        const Complex l = rows(e.target, i);
        if (l == Complex(0, 0)) continue;
        if (l.real() != 0) {
          re.lin.emplace_back(out.vre[i], l.real());
          if (out.vim[i] >= 0) im.lin.emplace_back(out.vim[i], l.real());
        }
        if (l.imag() != 0) {
          if (out.vim[i] >= 0) re.lin.emplace_back(out.vim[i], -l.imag());
          im.lin.emplace_back(out.vre[i], l.imag());
        }
      }
    }
    re.constant = -e.value.real();
    im.constant = -e.value.imag();
    add_square(f, re, c, n_vars);
    add_square(f, im, c, n_vars);
  }

  // Defining equalities tie each auxiliary to its quadratic form.
  for (std::size_t k = 0; k < out.aux.size(); ++k) {
    const auto& [kind, target] = out.aux[k];
    const int a = 2 * n - 1 + static_cast<int>(k);
    Polynomial g;
    if (kind == MeasKind::scada_voltage_mag) {
      g.add(pair_index(n_vars, out.vre[target], out.vre[target]), -1.0);
      if (out.vim[target] >= 0)
        g.add(pair_index(n_vars, out.vim[target], out.vim[target]), -1.0);
    } else {
      g = quad_form_poly(prob.matrices.trace_form(kind, target), out, n_vars);
      for (auto& [alpha, value] : g.terms) value = -value;
    }
    g.add(unit_index(n_vars, a), 1.0);
    out.pop.constraints.push_back({std::move(g), ConstraintSense::eq});
  }

  // The gauge fixes Im v_ref = 0 but leaves v and -v equal on every SCADA
  // channel; the half-space cut keeps the physical sign.
  Polynomial cut;
  cut.add(unit_index(n_vars, out.vre[out.ref]), 1.0);
  out.pop.constraints.push_back({std::move(cut), ConstraintSense::ge});
  return out;
}

VectorXr pop_point(const EstimationPop& pop, const EstimationProblem& prob,
                   const StateVector& v) {
  if (v.size() != pop.n_bus) throw config_error("state size mismatch");
  VectorXr x = VectorXr::Zero(pop.pop.n_vars);
  for (int i = 0; i < pop.n_bus; ++i) {
    x[pop.vre[i]] = v[i].real();
    if (pop.vim[i] >= 0) x[pop.vim[i]] = v[i].imag();
  }
  for (std::size_t k = 0; k < pop.aux.size(); ++k) {
    const auto& [kind, target] = pop.aux[k];
    const Real value =
        kind == MeasKind::scada_voltage_mag
            ? std::norm(v[target])
            : trace_value(prob.matrices.trace_form(kind, target), v);
    x[2 * pop.n_bus - 1 + static_cast<int>(k)] = value;
  }
  return x;
}

namespace {

SdpBlock localizing_block(const Polynomial& g, const MonomialBasis& rows,
                          const MonomialBasis& y_basis) {
  std::map<std::tuple<int, int, int>, Real> acc;
  for (int a = 0; a < rows.size(); ++a) {
    for (int b = a; b < rows.size(); ++b) {
      const MultiIndex ab = multi_add(rows.monomials[a], rows.monomials[b]);
      for (const auto& [gamma, coeff] : g.terms)
        acc[{a, b, y_basis.index_of(multi_add(gamma, ab))}] += coeff;
    }
  }
  SdpBlock block;
  block.size = rows.size();
  for (const auto& [key, value] : acc) {
    if (value == 0) continue;
    const auto& [row, col, var] = key;
    block.entries.push_back({row, col, var, value});
  }
  return block;
}

}  // namespace

SdpProblem build_moment_sdp(const PopProblem& pop, int d, Real delta) {
  if (pop.n_vars < 1) throw config_error("polynomial problem has no variables");
  if (d < 1) throw config_error("relaxation order must be at least 1");
  if (delta < 0) throw config_error("slack width must be nonnegative");
  bool has_eq = false;
  for (const auto& con : pop.constraints)
    has_eq = has_eq || con.sense == ConstraintSense::eq;
  if (has_eq && delta == 0)
    throw config_error(
        "equality constraints with zero slack leave the moment body with no "
        "interior point, so Slater's condition fails; pass delta > 0 to solve "
        "the banded reformulation");
  if (pop.objective.degree() > 2 * d)
    throw config_error("objective degree exceeds the relaxation order");

  const MonomialBasis y_basis = build_basis(pop.n_vars, 2 * d);
  std::map<int, MonomialBasis> row_cache;
  const auto rows_of = [&](int order) -> const MonomialBasis& {
    auto it = row_cache.find(order);
    if (it == row_cache.end())
      it = row_cache.emplace(order, build_basis(pop.n_vars, order)).first;
    return it->second;
  };

  SdpProblem sdp;
  sdp.n_vars = pop.n_vars;
  sdp.order = d;
  sdp.n_moments = y_basis.size();
  Polynomial one;
  one.add(MultiIndex(pop.n_vars, 0), 1.0);
  sdp.blocks.push_back(localizing_block(one, rows_of(d), y_basis));

  const auto push_localizing = [&](const Polynomial& g) {
    const int di = (g.degree() + 1) / 2;
    if (di > d)
      throw config_error("constraint degree " + std::to_string(g.degree()) +
                         " exceeds relaxation order " + std::to_string(d));
    sdp.blocks.push_back(localizing_block(g, rows_of(d - di), y_basis));
  };
  for (const auto& con : pop.constraints) {
    if (con.sense == ConstraintSense::ge) {
      push_localizing(con.g);
      continue;
    }
    Polynomial upper;  // delta - g >= 0
    upper.add(MultiIndex(pop.n_vars, 0), delta);
    for (const auto& [alpha, value] : con.g.terms) upper.add(alpha, -value);
    Polynomial lower = con.g;  // g + delta >= 0
    lower.add(MultiIndex(pop.n_vars, 0), delta);
    push_localizing(upper);
    push_localizing(lower);
  }

  sdp.objective = VectorXr::Zero(sdp.n_moments);
  for (const auto& [alpha, value] : pop.objective.terms)
    sdp.objective[y_basis.index_of(alpha)] += value;
  return sdp;
}

std::optional<VectorXr> extract_point(const MonomialBasis& y_basis,
                                      const VectorXr& y) {
  const int n = y_basis.n_vars;
  const MatrixXr m1 = moment_matrix(build_basis(n, 1), y_basis, y);
  Eigen::SelfAdjointEigenSolver<MatrixXr> eig(m1);
  const VectorXr& ev = eig.eigenvalues();  // ascending
  const Real top = ev[n];
  if (!(top > 0) || ev[n - 1] > 1e-6 * top) return std::nullopt;
  VectorXr u = eig.eigenvectors().col(n);
  if (std::abs(u[0]) < 1e-12) return std::nullopt;
  return VectorXr(u.tail(n) / u[0]);
}

std::optional<StateVector> extract_candidate(const EstimationPop& pop,
                                             const MonomialBasis& y_basis,
                                             const VectorXr& y) {
  const auto x = extract_point(y_basis, y);
  if (!x) return std::nullopt;
  StateVector v(pop.n_bus);
  for (int i = 0; i < pop.n_bus; ++i)
    v[i] = Complex((*x)[pop.vre[i]], pop.vim[i] >= 0 ? (*x)[pop.vim[i]] : 0.0);
  return v;
}

namespace {

std::string fmt_real(Real value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

}  // namespace

std::string export_sdpa(const SdpProblem& sdp) {
  std::ostringstream out;
  out << "*OFFSET " << fmt_real(sdp.objective.size() ? sdp.objective[0] : 0)
      << "\n";
  const int m = sdp.n_moments - 1;
  out << m << "\n" << sdp.blocks.size() << "\n";
  for (std::size_t b = 0; b < sdp.blocks.size(); ++b)
    out << (b ? " " : "") << sdp.blocks[b].size;
  out << "\n";
  for (int i = 1; i <= m; ++i)
    out << (i > 1 ? " " : "") << fmt_real(sdp.objective[i]);
  out << "\n";
  // Constraint matrices F_var grouped by variable; the constant side flips
  // sign because the format reads X = sum x_i F_i - F_0.
  for (int var = 0; var <= m; ++var) {
    for (std::size_t b = 0; b < sdp.blocks.size(); ++b) {
      for (const SdpEntry& e : sdp.blocks[b].entries) {
        if (e.var != var) continue;
        out << var << " " << b + 1 << " " << e.row + 1 << " " << e.col + 1
            << " " << fmt_real(var == 0 ? -e.value : e.value) << "\n";
      }
    }
  }
  return out.str();
}

SdpProblem parse_sdpa(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  Real offset = 0;
  std::vector<Real> numbers;
  while (std::getline(in, line)) {
    if (!line.empty() && (line[0] == '*' || line[0] == '"')) {
      std::istringstream cs(line);
      std::string tag;
      cs >> tag;
      if (tag == "*OFFSET" && !(cs >> offset))
        throw config_error("malformed offset comment");
      continue;
    }
    std::istringstream ls(line);
    Real value;
    while (ls >> value) numbers.push_back(value);
  }
  std::size_t pos = 0;
  const auto next = [&]() -> Real {
    if (pos >= numbers.size()) throw config_error("truncated SDPA input");
    return numbers[pos++];
  };
  const auto next_int = [&]() -> int {
    const Real v = next();
    const int i = static_cast<int>(std::lround(v));
    if (v != Real(i)) throw config_error("expected an integer in SDPA input");
    return i;
  };

  SdpProblem sdp;
  const int m = next_int();
  const int nblocks = next_int();
  if (m < 0 || nblocks <= 0) throw config_error("malformed SDPA header");
  sdp.n_moments = m + 1;
  sdp.blocks.resize(nblocks);
  for (int b = 0; b < nblocks; ++b)
    sdp.blocks[b].size = std::abs(next_int());
  sdp.objective = VectorXr::Zero(m + 1);
  sdp.objective[0] = offset;
  for (int i = 1; i <= m; ++i) sdp.objective[i] = next();

  std::vector<std::map<std::tuple<int, int, int>, Real>> acc(nblocks);
  while (pos < numbers.size()) {
    const int var = next_int();
    const int b = next_int() - 1;
    int row = next_int() - 1;
    int col = next_int() - 1;
    const Real value = next();
    if (var < 0 || var > m || b < 0 || b >= nblocks)
      throw config_error("SDPA entry out of range");
    if (row > col) std::swap(row, col);
    if (row < 0 || col >= sdp.blocks[b].size)
      throw config_error("SDPA entry out of range");
    acc[b][{row, col, var}] += var == 0 ? -value : value;
  }
  for (int b = 0; b < nblocks; ++b) {
    for (const auto& [key, value] : acc[b]) {
      if (value == 0) continue;
      const auto& [row, col, var] = key;
      sdp.blocks[b].entries.push_back({row, col, var, value});
    }
  }
  return sdp;
}

}  // namespace gridstate
