// Interior-point solver for the block LMI form produced by build_moment_sdp:
//
//   minimize  c . x   subject to   S(x) = F_0 + sum_i x_i F_i  PSD
//
// with x the free moments (y with the leading 1 stripped). Internally the
// problem is posed through its conic dual pair
//
//   min <F_0, X>  s.t. <F_i, X> = c_i, X PSD      (multiplier side)
//   max -c . y    s.t. F_0 - sum_i y_i F_i PSD    (y = -x)
//
// and solved in the homogeneous self-dual embedding (X, y, Sb, tau, kappa):
// tau scales the problem, kappa certifies infeasibility, and every Newton
// step contracts the linear residuals and the complementarity gap by the
// same factor. That lockstep matters here: the slack bands standing in for
// equality constraints make the feasible body ~delta thin, and in a plain
// infeasible-start iteration the gap races ahead of feasibility, leaving
// residual-times-multiplier terms that floor the measurable duality gap
// orders of magnitude above the target tolerance.
//
// Steps use Nesterov-Todd scaling, whose Schur complement
// B_ij = tr(F_i W F_j W) is symmetric positive definite, with a Mehrotra
// predictor-corrector. Near a degenerate optimum the Schur conditioning
// grows like the inverse square of the band width and can pass 1e19, beyond
// any hardware float, so the core is templated on its scalar: a first pass
// runs in 80-bit long double, and if it stalls short of tolerance the solve
// restarts in double-double arithmetic (~32 digits). Within each pass the
// Schur solve is ridged and iteratively refined, computed X-steps are
// projected back onto their linearized constraint through the fixed Gram
// matrix of the constraint matrices, and steps stay inside a wide
// centrality neighborhood. Deterministic and single-threaded; run one
// instance per thread for concurrent solves.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <utility>
#include <vector>

#include "dd_real.hpp"
#include "gridstate/sdp.hpp"

namespace gridstate {

namespace {

struct VarSlice {
  int var = 0;
  std::vector<SdpEntry> entries;  // row <= col
};

struct Block {
  int size = 0;
  std::vector<SdpEntry> entries;
  std::vector<VarSlice> by_var;  // ascending variable index
};

bool trace_enabled() {
  static const bool on = std::getenv("GRIDSTATE_IPM_TRACE") != nullptr;
  return on;
}

template <typename Xr>
struct IpmCore {
  using MatX = Eigen::Matrix<Xr, Eigen::Dynamic, Eigen::Dynamic>;
  using VecX = Eigen::Matrix<Xr, Eigen::Dynamic, 1>;

  // <F, M> for the symmetric matrix F stored as upper-triangle entries.
  static Xr dot_entries(const std::vector<SdpEntry>& entries, const MatX& m) {
    Xr out = 0;
    for (const SdpEntry& e : entries)
      out += Xr(e.value) * m(e.row, e.col) * Xr(e.row == e.col ? 1 : 2);
    return out;
  }

  static MatX dense_slice(const VarSlice& slice, int size) {
    MatX f = MatX::Zero(size, size);
    for (const SdpEntry& e : slice.entries) {
      f(e.row, e.col) += Xr(e.value);
      if (e.row != e.col) f(e.col, e.row) += Xr(e.value);
    }
    return f;
  }

  // F_0 * coef0 + sum over free vars coef(var) * F_var.
  template <typename CoefFn>
  static MatX scatter(const Block& block, Xr coef0, CoefFn&& coef) {
    MatX m = MatX::Zero(block.size, block.size);
    for (const SdpEntry& e : block.entries) {
      const Xr v = (e.var == 0 ? coef0 : coef(e.var - 1)) * Xr(e.value);
      if (v == Xr(0)) continue;
      m(e.row, e.col) += v;
      if (e.row != e.col) m(e.col, e.row) += v;
    }
    return m;
  }

  static Xr min_eig(const MatX& m) {
    return Eigen::SelfAdjointEigenSolver<MatX>(m, Eigen::EigenvaluesOnly)
        .eigenvalues()[0];
  }

  // Largest t with M + t * dM PSD (1e30 when every t works).
  static Xr max_step(const MatX& m, const MatX& dm) {
    const Xr eps = Eigen::NumTraits<Xr>::epsilon();
    Eigen::LLT<MatX> llt(m);
    MatX t;
    if (llt.info() == Eigen::Success) {
      const auto l = llt.matrixL();
      const MatX a = l.solve(dm);
      t = l.solve(MatX(a.transpose()));
    } else {
      Eigen::SelfAdjointEigenSolver<MatX> eig(m);
      if (eig.eigenvalues()[0] <= Xr(0)) return Xr(0);
      const MatX r = eig.operatorInverseSqrt();
      t = r * dm * r;
    }
    const Xr lo = min_eig(t);
    if (lo >= Xr(-1e3) * eps) return Xr(1e30);
    return Xr(-1) / lo;
  }

  // Nesterov-Todd point W (W Sb W = X) with the pieces the step equations
  // use: R = W^(1/2) and the spectral factors of the scaled point
  // lambda = R^-1 X R^-1 = R Sb R.
  struct Scaling {
    MatX w;
    MatX r, rinv;
    MatX q;   // lambda eigenvectors
    VecX l;   // lambda eigenvalues, ascending, all positive
    bool ok = false;
  };

  static Scaling nt_scaling(const MatX& x, const MatX& sb) {
    Scaling out;
    Eigen::SelfAdjointEigenSolver<MatX> ex(x);
    if (ex.eigenvalues()[0] <= Xr(0)) return out;
    const MatX xhalf = ex.operatorSqrt();
    Eigen::SelfAdjointEigenSolver<MatX> et(MatX(xhalf * sb * xhalf));
    if (et.eigenvalues()[0] <= Xr(0)) return out;
    out.w = xhalf * et.operatorInverseSqrt() * xhalf;
    Eigen::SelfAdjointEigenSolver<MatX> ew(out.w);
    if (ew.eigenvalues()[0] <= Xr(0)) return out;
    out.r = ew.operatorSqrt();
    out.rinv = ew.operatorInverseSqrt();
    Eigen::SelfAdjointEigenSolver<MatX> el(MatX(out.r * sb * out.r));
    if (el.eigenvalues()[0] <= Xr(0)) return out;
    out.q = el.eigenvectors();
    out.l = el.eigenvalues();
    out.ok = true;
    return out;
  }

  static SdpResult run(const SdpProblem& sdp, const SdpOptions& opts,
                       const std::vector<Block>& blocks, int total_dim) {
    const Xr eps = Eigen::NumTraits<Xr>::epsilon();
    const int m = sdp.n_moments - 1;
    const int nb = static_cast<int>(blocks.size());
    const bool trace = trace_enabled();

    const Xr c0 = Xr(sdp.objective[0]);
    const VecX c = sdp.objective.tail(m).template cast<Xr>();

    // Dense constant matrices C_b (the F_0 part of each block).
    std::vector<MatX> cmat(nb);
    Xr norm_f0 = 0;
    for (int b = 0; b < nb; ++b) {
      cmat[b] = scatter(blocks[b], Xr(1), [](int) { return Xr(0); });
      norm_f0 += cmat[b].squaredNorm();
    }
    norm_f0 = sqrt(norm_f0);

    // Gram matrix of the constraint matrices over the free moments: fixed,
    // well-conditioned, factored once. X-steps are projected through it so
    // their linearized constraint holds to working precision no matter how
    // badly the scaled Schur system was conditioned.
    MatX gram = MatX::Zero(m, m);
    for (int b = 0; b < nb; ++b) {
      const auto& vars = blocks[b].by_var;
      std::vector<MatX> dense(vars.size());
      for (std::size_t jj = 0; jj < vars.size(); ++jj)
        if (vars[jj].var != 0)
          dense[jj] = dense_slice(vars[jj], blocks[b].size);
      for (std::size_t jj = 0; jj < vars.size(); ++jj) {
        if (vars[jj].var == 0) continue;
        const int j = vars[jj].var - 1;
        for (std::size_t ii = jj; ii < vars.size(); ++ii) {
          if (vars[ii].var == 0) continue;
          const int i = vars[ii].var - 1;
          const Xr v = dot_entries(vars[ii].entries, dense[jj]);
          gram(i, j) += v;
          if (i != j) gram(j, i) += v;
        }
      }
    }
    Eigen::LLT<MatX> gram_llt(gram);
    for (Xr ridge = Xr(1e4) * eps * (Xr(1) + gram.diagonal().maxCoeff());
         gram_llt.info() != Eigen::Success; ridge *= Xr(100)) {
      MatX reg = gram;
      reg.diagonal().array() += ridge;
      gram_llt.compute(reg);
      if (ridge > Xr(1e6))
        throw config_error("degenerate SDP constraint matrices");
    }

    // Embedding state. Cold start is the perfectly centered embedding
    // point. A warm start seeds y from the supplied moments and begins at
    // the lower level nu: the slack is the model bumped so every block has
    // smallest eigenvalue at least nu (keeping the multiplier nu S^-1 no
    // larger than identity, so the dual residual starts at cold scale), and
    // every complementarity product starts exactly at nu. Near-optimal
    // moments then sit close to the central path at mu = nu, skipping the
    // head of the path instead of being pulled back to its analytic center.
    std::vector<MatX> xm(nb), sb(nb);
    VecX y = VecX::Zero(m);
    Xr tau = 1, kappa = 1;
    if (opts.init.has_value()) {
      const VecX x0 = opts.init->tail(m).template cast<Xr>();
      y = -x0;
      const Xr nu = Xr(1e-3);
      kappa = nu;
      for (int b = 0; b < nb; ++b) {
        MatX model =
            cmat[b] + scatter(blocks[b], Xr(0), [&](int i) { return x0[i]; });
        const Xr lo = min_eig(model);
        const Xr target = nu * (Xr(1) + Xr(1e-3) * model.norm());
        if (lo < target)
          model +=
              (target - lo) * MatX::Identity(blocks[b].size, blocks[b].size);
        sb[b] = model;
        const MatX sinv_half =
            Eigen::SelfAdjointEigenSolver<MatX>(sb[b]).operatorInverseSqrt();
        xm[b] = nu * sinv_half * sinv_half;
      }
    } else {
      for (int b = 0; b < nb; ++b) {
        xm[b] = MatX::Identity(blocks[b].size, blocks[b].size);
        sb[b] = MatX::Identity(blocks[b].size, blocks[b].size);
      }
    }

    // A failed run reports its best iterate, not its last: once the scalar
    // runs out of precision the iterate can slide along the tau -> 0 ray of
    // the embedding and wreck an almost-converged point, and the wider
    // rerun wants the good point as its seed.
    SdpResult res;
    Xr cur_bound = 0, cur_gap = Xr(1e300);
    Xr best_metric = Xr(1e300);
    VecX y_best = y;
    Xr tau_best = tau, bound_best = 0, gap_best = Xr(1e300);
    const auto finish = [&](SdpStatus status, int iterations) {
      if (status != SdpStatus::converged && best_metric < Xr(1e300)) {
        y = y_best;
        tau = tau_best;
        cur_bound = bound_best;
        cur_gap = gap_best;
      }
      res.y = VectorXr(m + 1);
      res.y[0] = 1;
      const Xr t = std::max(tau, Xr(1e-300));
      for (int i = 0; i < m; ++i) res.y[i + 1] = double(-y[i] / t);
      res.bound = double(cur_bound);
      res.status = status;
      res.iterations = iterations;
      res.rel_gap = double(cur_gap);
      return res;
    };

    Xr mu0 = 0;
    Xr best_gap = Xr(1e300);
    int stalls = 0, no_progress = 0;
    for (int iter = 1; iter <= opts.max_iterations; ++iter) {
      // Residuals of the embedding and de-embedded convergence metrics.
      VecX r1 = c * tau;
      std::vector<MatX> e2(nb);
      Xr cx = 0, gap_xs = 0, e2_sq = 0;
      for (int b = 0; b < nb; ++b) {
        for (const VarSlice& slice : blocks[b].by_var)
          if (slice.var != 0)
            r1[slice.var - 1] -= dot_entries(slice.entries, xm[b]);
        e2[b] = cmat[b] * tau - sb[b] -
                scatter(blocks[b], Xr(0), [&](int i) { return y[i]; });
        e2_sq += e2[b].squaredNorm();
        cx += (cmat[b].array() * xm[b].array()).sum();
        gap_xs += (xm[b].array() * sb[b].array()).sum();
      }
      const Xr by = c.dot(y);
      const Xr e3 = by - cx - kappa;
      const Xr mu = (gap_xs + tau * kappa) / Xr(total_dim + 1);
      const Xr pobj = -by / tau + c0;
      const Xr dobj = c0 - cx / tau;
      const Xr scale =
          Xr(1) + Xr(std::abs(double(pobj))) + Xr(std::abs(double(dobj)));
      const Xr rel_gap = (pobj < dobj ? dobj - pobj : pobj - dobj) / scale;
      const Xr comp = gap_xs / (tau * tau) / scale;
      const Xr pres = sqrt(e2_sq) / tau / (Xr(1) + norm_f0);
      const Xr dres = r1.norm() / tau / (Xr(1) + c.norm());
      cur_bound = c.dot(VecX(-y / tau)) + c0;
      cur_gap = rel_gap;
      const Xr metric = rel_gap + pres + dres;
      if (metric < best_metric) {
        best_metric = metric;
        y_best = y;
        tau_best = tau;
        bound_best = cur_bound;
        gap_best = rel_gap;
      }
      if (trace)
        std::fprintf(stderr,
                     "ipm %3d pobj=%+.6e dobj=%+.6e gap=%.3e comp=%.3e "
                     "pres=%.3e dres=%.3e tau=%.3e kappa=%.3e\n",
                     iter, double(pobj), double(dobj), double(rel_gap),
                     double(comp), double(pres), double(dres), double(tau),
                     double(kappa));
      if (iter == 1) mu0 = mu;
      const Xr tol = Xr(opts.tol);
      if (rel_gap <= tol && pres <= Xr(10) * tol && dres <= Xr(10) * tol)
        return finish(SdpStatus::converged, iter - 1);
      if (!std::isfinite(double(mu)) || mu > Xr(1e10) * (Xr(1) + mu0) ||
          tau < Xr(1e-12) * std::max(Xr(1), kappa))
        return finish(SdpStatus::failed, iter - 1);
      // Precision ceiling: the duality gap has stopped contracting. Report
      // failure so the caller can restart in a wider scalar.
      if (rel_gap > Xr(0.9) * best_gap) {
        if (++no_progress >= 8) return finish(SdpStatus::failed, iter - 1);
      } else {
        no_progress = 0;
      }
      best_gap = std::min(best_gap, rel_gap);

      std::vector<Scaling> sc(nb);
      for (int b = 0; b < nb; ++b) {
        sc[b] = nt_scaling(xm[b], sb[b]);
        if (!sc[b].ok) {
          // Push the iterate off the cone boundary once and retry; rounding
          // can leave a nonpositive eigenvalue after a long step.
          const Xr bump_x = Xr(1e4) * eps * (Xr(1) + xm[b].norm());
          const Xr bump_s = Xr(1e4) * eps * (Xr(1) + sb[b].norm());
          xm[b] += bump_x * MatX::Identity(blocks[b].size, blocks[b].size);
          sb[b] += bump_s * MatX::Identity(blocks[b].size, blocks[b].size);
          sc[b] = nt_scaling(xm[b], sb[b]);
          if (!sc[b].ok) return finish(SdpStatus::failed, iter - 1);
        }
      }

      // Schur complement over the free moments, ridged so the factorization
      // survives the worst-case conditioning of the endgame.
      MatX big = MatX::Zero(m, m);
      for (int b = 0; b < nb; ++b) {
        const auto& vars = blocks[b].by_var;
        for (std::size_t jj = 0; jj < vars.size(); ++jj) {
          if (vars[jj].var == 0) continue;
          const int j = vars[jj].var - 1;
          const MatX tj =
              sc[b].w * dense_slice(vars[jj], blocks[b].size) * sc[b].w;
          for (std::size_t ii = jj; ii < vars.size(); ++ii) {
            if (vars[ii].var == 0) continue;
            const int i = vars[ii].var - 1;
            const Xr v = dot_entries(vars[ii].entries, tj);
            big(i, j) += v;
            if (i != j) big(j, i) += v;
          }
        }
      }
      Eigen::LLT<MatX> llt;
      Xr ridge = Xr(10) * eps * (Xr(1) + big.diagonal().maxCoeff());
      for (int attempt = 0;; ++attempt) {
        MatX reg = big;
        reg.diagonal().array() += ridge;
        llt.compute(reg);
        if (llt.info() == Eigen::Success) break;
        if (attempt >= 8) return finish(SdpStatus::failed, iter - 1);
        ridge *= Xr(100);
      }
      const auto bsolve = [&](const VecX& rhs) {
        VecX out = llt.solve(rhs);
        for (int sweep = 0; sweep < 3; ++sweep) {
          const VecX resid = rhs - big * out;
          if (resid.norm() <= eps * rhs.norm()) break;
          out += llt.solve(resid);
        }
        return out;
      };

      // tau-column pieces: f_i = <F_i, W C W>, ctwct = <C, W C W>, and the
      // sandwiched residual A(W e2 W).
      VecX f = VecX::Zero(m);
      VecX ae2w = VecX::Zero(m);
      Xr ctwct = 0, ce2w = 0;
      std::vector<MatX> we2w(nb);
      for (int b = 0; b < nb; ++b) {
        const MatX wcw = sc[b].w * cmat[b] * sc[b].w;
        we2w[b] = sc[b].w * e2[b] * sc[b].w;
        ctwct += (cmat[b].array() * wcw.array()).sum();
        ce2w += (cmat[b].array() * we2w[b].array()).sum();
        for (const VarSlice& slice : blocks[b].by_var) {
          if (slice.var == 0) continue;
          f[slice.var - 1] += dot_entries(slice.entries, wcw);
          ae2w[slice.var - 1] += dot_entries(slice.entries, we2w[b]);
        }
      }
      const VecX bq = bsolve(VecX(f + c));

      // Newton directions for targets: complementarity dX + W dSb W = V,
      // tau kappa linearization tau dk + kappa dt = sigma mu - tau kappa -
      // ck, and scaling of every linear residual by (1 - sigma).
      const auto directions = [&](const std::vector<MatX>& v, Xr sigma, Xr ck,
                                  VecX& dy, Xr& dt, Xr& dk,
                                  std::vector<MatX>& dxm,
                                  std::vector<MatX>& dsb) {
        const Xr rs = Xr(1) - sigma;
        VecX h = rs * r1 + rs * ae2w;
        Xr cv = 0;
        for (int b = 0; b < nb; ++b) {
          for (const VarSlice& slice : blocks[b].by_var)
            if (slice.var != 0)
              h[slice.var - 1] -= dot_entries(slice.entries, v[b]);
          cv += (cmat[b].array() * v[b].array()).sum();
        }
        const VecX p = bsolve(h);
        const Xr dnum = -rs * e3 + cv - rs * ce2w +
                        (sigma * mu - tau * kappa - ck) / tau;
        const Xr dden = ctwct + kappa / tau + (c - f).dot(bq);
        dt = (dnum - (c - f).dot(p)) / dden;
        dy = p + bq * dt;
        dxm.resize(nb);
        dsb.resize(nb);
        for (int b = 0; b < nb; ++b) {
          dsb[b] = cmat[b] * dt + rs * e2[b] -
                   scatter(blocks[b], Xr(0), [&](int i) { return dy[i]; });
          dxm[b] = v[b] - sc[b].w * dsb[b] * sc[b].w;
        }
        // Project dX back onto its linearized constraint.
        VecX miss = rs * r1 + c * dt;
        for (int b = 0; b < nb; ++b)
          for (const VarSlice& slice : blocks[b].by_var)
            if (slice.var != 0)
              miss[slice.var - 1] -= dot_entries(slice.entries, dxm[b]);
        VecX eta = gram_llt.solve(miss);
        eta += gram_llt.solve(VecX(miss - gram * eta));
        for (int b = 0; b < nb; ++b)
          dxm[b] += scatter(blocks[b], Xr(0), [&](int i) { return eta[i]; });
        // Recover dk from the gap equation directly so every linear
        // residual of the embedding contracts exactly; the tau kappa
        // complementarity target absorbs the Schur solve error instead.
        Xr cdx = 0;
        for (int b = 0; b < nb; ++b)
          cdx += (cmat[b].array() * dxm[b].array()).sum();
        dk = c.dot(dy) - cdx + rs * e3;
      };

      // Centrality of the current iterate: smallest eigenvalue of X Sb (and
      // the tau kappa product) over their mean. The lambda eigenvalues from
      // the NT scaling square to the eigenvalues of X Sb per block.
      Xr ratio_now = tau * kappa;
      for (int b = 0; b < nb; ++b)
        ratio_now = std::min(ratio_now, sc[b].l[0] * sc[b].l[0]);
      ratio_now /= mu;
      // True if the trial iterate stays in the wide centrality neighborhood
      // (all eigenvalues of X Sb at least gamma times their mean), or at
      // worst slips mildly below the current centrality. The relative form
      // keeps recentering steps acceptable when the iterate has already
      // drifted outside; a hard floor alone deadlocks there. Off-central
      // iterates wedge against the cone boundary and poison the NT scaling.
      const Xr ratio_floor = std::min(Xr(1e-3), Xr(0.9) * ratio_now);
      const auto centered = [&](const std::vector<MatX>& dxm,
                                const std::vector<MatX>& dsb, Xr dt, Xr dk,
                                Xr a) {
        const Xr tau_t = tau + a * dt;
        const Xr kappa_t = kappa + a * dk;
        if (tau_t <= Xr(0) || kappa_t <= Xr(0)) return false;
        Xr gap_t = tau_t * kappa_t;
        Xr lo = tau_t * kappa_t;
        Xr lo_tk = tau_t * kappa_t;
        for (int b = 0; b < nb; ++b) {
          const MatX xt = xm[b] + a * dxm[b];
          const MatX st = sb[b] + a * dsb[b];
          // The product test below cannot see a negative eigenvalue of one
          // factor hiding along a small eigendirection of the other, so
          // check interiority of each factor outright.
          if (min_eig(xt) <= Xr(0.1) * eps * xt.norm()) return false;
          if (min_eig(st) <= Xr(0.1) * eps * st.norm()) return false;
          Eigen::LLT<MatX> llt_x(xt);
          if (llt_x.info() != Eigen::Success) return false;
          const MatX l = llt_x.matrixL();
          const MatX prod = l.transpose() * st * l;
          const Xr lob = min_eig(prod);
          if (lob <= Xr(0)) return false;
          lo = std::min(lo, lob);
          gap_t += prod.trace();
        }
        const Xr mu_t = gap_t / Xr(total_dim + 1);
        // tau kappa is a scalar pair with no degenerate directions to
        // excuse: letting it dive under the mean is how the iterate slides
        // onto the tau -> 0 ray, so it gets a much tighter leash than the
        // matrix blocks.
        const Xr tk_floor = std::min(Xr(0.3), Xr(0.9) * ratio_now);
        if (lo_tk < tk_floor * mu_t) return false;
        return lo >= ratio_floor * mu_t;
      };
      const auto step_length = [&](const std::vector<MatX>& dxm,
                                   const std::vector<MatX>& dsb, Xr dt, Xr dk,
                                   bool guard) {
        Xr a = 1;
        for (int b = 0; b < nb; ++b) {
          a = std::min(a, Xr(0.98) * max_step(xm[b], dxm[b]));
          a = std::min(a, Xr(0.98) * max_step(sb[b], dsb[b]));
        }
        if (dt < Xr(0)) a = std::min(a, Xr(0.98) * tau / -dt);
        if (dk < Xr(0)) a = std::min(a, Xr(0.98) * kappa / -dk);
        a = std::min(a, Xr(1));
        if (guard)
          for (int tries = 0; tries < 60 && !centered(dxm, dsb, dt, dk, a);
               ++tries)
            a *= Xr(0.8);
        return a;
      };

      // Affine predictor.
      std::vector<MatX> v(nb);
      for (int b = 0; b < nb; ++b) v[b] = -xm[b];
      VecX dy;
      Xr dt = 0, dk = 0;
      std::vector<MatX> dxm, dsb;
      directions(v, Xr(0), Xr(0), dy, dt, dk, dxm, dsb);
      const Xr a_aff = step_length(dxm, dsb, dt, dk, false);
      Xr gap_aff = (tau + a_aff * dt) * (kappa + a_aff * dk);
      for (int b = 0; b < nb; ++b)
        gap_aff += ((xm[b] + a_aff * dxm[b]).array() *
                    (sb[b] + a_aff * dsb[b]).array())
                       .sum();
      const Xr ratio = std::max(Xr(0), gap_aff / (mu * Xr(total_dim + 1)));
      const Xr sigma = std::min(Xr(0.99), ratio * ratio * ratio);

      // Mehrotra corrector in the scaled space: solve lambda o U = rhs for
      // the combined target V = R U R with the affine cross term folded in.
      const Xr ck = dt * dk;
      const auto corrector = [&](Xr sig) {
        for (int b = 0; b < nb; ++b) {
          const MatX dxt = sc[b].rinv * dxm[b] * sc[b].rinv;
          const MatX dst = sc[b].r * dsb[b] * sc[b].r;
          const MatX cross = Xr(0.5) * (dxt * dst + dst * dxt);
          MatX rhs =
              sc[b].q.transpose() *
              (sig * mu * MatX::Identity(blocks[b].size, blocks[b].size) -
               cross) *
              sc[b].q;
          for (int i = 0; i < blocks[b].size; ++i)
            rhs(i, i) -= sc[b].l[i] * sc[b].l[i];
          for (int i = 0; i < blocks[b].size; ++i)
            for (int j = 0; j < blocks[b].size; ++j)
              rhs(i, j) *= Xr(2) / (sc[b].l[i] + sc[b].l[j]);
          v[b] = sc[b].r * sc[b].q * rhs * sc[b].q.transpose() * sc[b].r;
        }
      };
      corrector(sigma);
      directions(v, sigma, ck, dy, dt, dk, dxm, dsb);
      Xr a = step_length(dxm, dsb, dt, dk, true);
      if (a < Xr(1e-3)) {
        // Wedged against the boundary: recenter hard to restore room before
        // attempting further progress.
        corrector(Xr(0.9));
        directions(v, Xr(0.9), ck, dy, dt, dk, dxm, dsb);
        a = step_length(dxm, dsb, dt, dk, true);
      }
      if (trace)
        std::fprintf(stderr, "    sigma=%.3f a=%.3e ratio=%.3e\n",
                     double(sigma), double(a), double(ratio_now));
      y += a * dy;
      tau += a * dt;
      kappa += a * dk;
      for (int b = 0; b < nb; ++b) {
        xm[b] += a * dxm[b];
        sb[b] += a * dsb[b];
      }
      if (a < Xr(1e-8)) {
        if (++stalls >= 3) return finish(SdpStatus::failed, iter);
      } else {
        stalls = 0;
      }
    }
    return finish(SdpStatus::failed, opts.max_iterations);
  }
};

}  // namespace

SdpResult solve_sdp(const SdpProblem& sdp, const SdpOptions& opts) {
  if (sdp.n_moments < 1 || sdp.objective.size() != sdp.n_moments)
    throw config_error("inconsistent SDP problem");
  if (sdp.n_moments > 2000)
    throw config_error("problem has " + std::to_string(sdp.n_moments) +
                       " moment variables; the built-in solver accepts at "
                       "most 2000 (export the problem instead)");
  if (opts.init.has_value() && opts.init->size() != sdp.n_moments)
    throw config_error("warm-start moment vector has the wrong length");
  const int nb = static_cast<int>(sdp.blocks.size());
  if (nb == 0) throw config_error("SDP problem has no blocks");

  std::vector<Block> blocks(nb);
  int total_dim = 0;
  for (int b = 0; b < nb; ++b) {
    blocks[b].size = sdp.blocks[b].size;
    blocks[b].entries = sdp.blocks[b].entries;
    total_dim += blocks[b].size;
    std::map<int, std::vector<SdpEntry>> grouped;
    for (const SdpEntry& e : blocks[b].entries) {
      if (e.var < 0 || e.var >= sdp.n_moments)
        throw config_error("SDP entry variable out of range");
      grouped[e.var].push_back(e);
    }
    for (auto& [var, entries] : grouped)
      blocks[b].by_var.push_back({var, std::move(entries)});
  }

  if (sdp.n_moments == 1) {
    SdpResult res;
    res.y = VectorXr::Ones(1);
    res.bound = sdp.objective[0];
    res.status = SdpStatus::converged;
    return res;
  }

  SdpResult first = IpmCore<long double>::run(sdp, opts, blocks, total_dim);
  if (first.status == SdpStatus::converged) return first;
  // Hardware precision hit its ceiling before the gap closed; rerun in
  // double-double arithmetic, which resolves Schur systems past condition
  // 1e19 at a few times the cost per iteration. Seed it with the best
  // moments of the failed pass, falling back to a cold rerun if that seed
  // was itself too poisoned to converge from.
  if (trace_enabled())
    std::fprintf(stderr, "ipm escalating to double-double precision\n");
  SdpOptions seeded = opts;
  if (first.y.size() == sdp.n_moments && first.y.allFinite())
    seeded.init = first.y;
  SdpResult second = IpmCore<detail::dd>::run(sdp, seeded, blocks, total_dim);
  second.iterations += first.iterations;
  if (second.status == SdpStatus::converged) return second;
  SdpResult third = IpmCore<detail::dd>::run(sdp, opts, blocks, total_dim);
  third.iterations += second.iterations;
  if (third.status == SdpStatus::converged) return third;
  SdpResult* best = &first;
  if (second.rel_gap < best->rel_gap) best = &second;
  if (third.rel_gap < best->rel_gap) best = &third;
  best->iterations = third.iterations;
  return *best;
}

}  // namespace gridstate
