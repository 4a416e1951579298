#include "gridstate/robust.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <iostream>
#include <limits>
#include <mutex>
#include <queue>
#include <thread>
#include <utility>
#include <vector>

#include "gridstate/rng.hpp"

namespace gridstate {

namespace {

using Clock = std::chrono::steady_clock;

constexpr Real kInf = std::numeric_limits<Real>::infinity();

std::vector<int> budget_weights(const MeasurementSet& ms) {
  std::vector<int> w(ms.size());
  for (int j = 0; j < ms.size(); ++j)
    w[j] = budget_weight(ms.entries[j].kind);
  return w;
}

// Exact reachability of weight R with n1 free unit entries and n2 free
// double entries.
bool reachable(int R, int n1, int n2) {
  if (R < 0 || R > n1 + 2 * n2) return false;
  int x1 = std::min(n1, R);
  if ((R - x1) % 2) --x1;
  if (x1 < 0) return false;
  return R - x1 <= 2 * n2;
}

bool budget_ok(int spent, int d, bool at_least) {
  return at_least ? spent >= d : spent == d;
}

void check_budget(const std::vector<int>& w, int d, bool at_least, int n_bus) {
  int total = 0, n1 = 0, n2 = 0;
  for (int wj : w) {
    total += wj;
    (wj == 1 ? n1 : n2) += 1;
  }
  if (d <= 0 || d > total)
    throw config_error("selection budget " + std::to_string(d) +
                       " outside (0, " + std::to_string(total) + "]");
  if (!at_least && !reachable(d, n1, n2))
    throw config_error("selection budget " + std::to_string(d) +
                       " not reachable with the given entry weights");
  if (d <= 2 * n_bus)
    std::cerr << "warning: budget " << d << " keeps at most 2n = " << 2 * n_bus
              << " real channels; the state may be underdetermined\n";
}

// Mask evaluations are seeded from the mask bits so that any search path
// assigns the same value to the same mask. The full mask keeps the caller
// seed: with everything selected the problem is plain weighted least squares.
std::uint64_t mask_seed(std::uint64_t seed, const std::vector<int>& keep) {
  bool full = true;
  for (int k : keep) full = full && k == 1;
  if (full) return seed;
  std::uint64_t h = derive_seed(seed, 0x6d61736bull);
  std::uint64_t word = 1;
  int packed = 0;
  for (int k : keep) {
    word = (word << 1) | static_cast<unsigned>(k);
    if (++packed == 63) {
      h = derive_seed(h, word);
      word = 1;
      packed = 0;
    }
  }
  return derive_seed(h, word);
}

std::uint64_t fix_seed(std::uint64_t seed, const std::vector<signed char>& fix) {
  std::uint64_t h = derive_seed(seed, 0x66697865ull);
  std::uint64_t word = 1;
  int packed = 0;
  for (signed char f : fix) {
    word = (word << 2) | static_cast<unsigned>(f + 1);
    if (++packed == 31) {
      h = derive_seed(h, word);
      word = 1;
      packed = 0;
    }
  }
  return derive_seed(h, word);
}

// Canonical value of a complete mask.
EstimateResult eval_mask(EstimationProblem& prob, const std::vector<int>& keep,
                         const RobustOptions& opts) {
  prob.selection = VectorXr(static_cast<int>(keep.size()));
  for (int j = 0; j < prob.selection.size(); ++j) prob.selection[j] = keep[j];
  return multistart(prob, opts.starts, mask_seed(opts.seed, keep), opts.wls);
}

struct Incumbent {
  Real cost = kInf;
  std::vector<int> keep;
  StateVector state;

  bool accepts(Real c, const std::vector<int>& k) const {
    return c < cost || (c == cost && k < keep);
  }
};

// Greedy budget-exact subset with the smallest residual terms, used for the
// warm incumbent. Density order plus a one-unit parity patch; heuristic, the
// search refines it.
std::vector<int> integral_fill(const VectorXr& t, const std::vector<int>& w,
                               int d, bool at_least) {
  const int L = static_cast<int>(w.size());
  std::vector<int> order(L);
  for (int j = 0; j < L; ++j) order[j] = j;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const Real da = t[a] / w[a], db = t[b] / w[b];
    if (da != db) return da < db;
    return a < b;
  });
  std::vector<int> keep(L, 0);
  int rem = d;
  for (int j : order) {
    if (w[j] <= rem || (at_least && rem > 0)) {
      keep[j] = 1;
      rem -= w[j];
    }
  }
  if (rem == 1) {
    // Only double entries left unkept. Trade the worst kept unit entry for
    // the best unkept double entry.
    int give = -1, take = -1;
    for (int j = 0; j < L; ++j) {
      if (keep[j] && w[j] == 1 && (give < 0 || t[j] > t[give])) give = j;
      if (!keep[j] && w[j] == 2 && (take < 0 || t[j] < t[take])) take = j;
    }
    if (give >= 0 && take >= 0) {
      keep[give] = 0;
      keep[take] = 1;
    }
  }
  return keep;
}

// Iterated trimming: fit, drop the largest residual terms to meet the
// budget, refit on the kept set, repeat until the kept set stabilizes.
Incumbent trimmed_incumbent(EstimationProblem& prob, int d,
                            const std::vector<int>& w,
                            const RobustOptions& opts) {
  const int L = static_cast<int>(w.size());
  std::vector<int> keep(L, 1);
  EstimateResult fit = eval_mask(prob, keep, opts);
  for (int round = 0; round < 12; ++round) {
    const VectorXr t = objective_terms(prob, fit.state);
    std::vector<int> next = integral_fill(t, w, d, opts.at_least);
    if (next == keep) break;
    keep = std::move(next);
    prob.selection = VectorXr(L);
    for (int j = 0; j < L; ++j) prob.selection[j] = keep[j];
    fit = estimate_wls(prob, fit.state, opts.wls);
  }
  const EstimateResult canon = eval_mask(prob, keep, opts);
  return Incumbent{canon.cost, std::move(keep), canon.state};
}

void set_selection(EstimationProblem& prob, const std::vector<int>& keep) {
  prob.selection = VectorXr(static_cast<int>(keep.size()));
  for (int j = 0; j < prob.selection.size(); ++j) prob.selection[j] = keep[j];
}

// Same-budget exchange search around a complete mask. Trimming alone can be
// fooled by masking: a gross entry absorbed into the fit makes a clean entry
// look worst. Trading worst-kept entries for best-dropped ones escapes that
// fixed point. Candidates are screened with warm refits; acceptance uses the
// canonical mask value so the incumbent stays comparable with enumeration.
Incumbent swap_improve(EstimationProblem& prob, Incumbent inc, int d,
                       const std::vector<int>& w, const RobustOptions& opts) {
  const int L = static_cast<int>(w.size());
  constexpr int kCap = 8;
  constexpr int kPairCap = 5;
  for (int round = 0; round < 15; ++round) {
    set_selection(prob, inc.keep);
    const VectorXr t = objective_terms(prob, inc.state);
    int spent = 0;
    std::vector<int> kept1, kept2, drop1, drop2;
    for (int j = 0; j < L; ++j) {
      if (inc.keep[j]) {
        spent += w[j];
        (w[j] == 1 ? kept1 : kept2).push_back(j);
      } else {
        (w[j] == 1 ? drop1 : drop2).push_back(j);
      }
    }
    auto worst_first = [&](std::vector<int>& idx) {
      std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (t[a] != t[b]) return t[a] > t[b];
        return a < b;
      });
    };
    auto best_first = [&](std::vector<int>& idx) {
      std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (t[a] != t[b]) return t[a] < t[b];
        return a < b;
      });
    };
    worst_first(kept1);
    worst_first(kept2);
    best_first(drop1);
    best_first(drop2);
    auto cap = [](std::vector<int>& idx, int c) {
      if (static_cast<int>(idx.size()) > c) idx.resize(c);
    };
    cap(kept1, kCap);
    cap(kept2, kCap);
    cap(drop1, kCap);
    cap(drop2, kCap);

    std::vector<std::vector<int>> cands;
    auto exchange = [&](std::initializer_list<int> out,
                        std::initializer_list<int> in) {
      std::vector<int> m = inc.keep;
      for (int j : out) m[j] = 0;
      for (int j : in) m[j] = 1;
      cands.push_back(std::move(m));
    };
    for (int g : kept1)
      for (int a : drop1) exchange({g}, {a});
    for (int g : kept2)
      for (int a : drop2) exchange({g}, {a});
    const int p1 = std::min<int>(kPairCap, drop1.size());
    for (int g : kept2)
      for (int x = 0; x < p1; ++x)
        for (int y = x + 1; y < p1; ++y) exchange({g}, {drop1[x], drop1[y]});
    const int k1 = std::min<int>(kPairCap, kept1.size());
    for (int a : drop2)
      for (int x = 0; x < k1; ++x)
        for (int y = x + 1; y < k1; ++y) exchange({kept1[x], kept1[y]}, {a});
    if (opts.at_least) {
      // Slack above the floor lets a kept entry go without a replacement.
      for (int g : kept1)
        if (spent - 1 >= d) exchange({g}, {});
      for (int g : kept2)
        if (spent - 2 >= d) exchange({g}, {});
    }

    // Warm screen, then canonical evaluation of the best few.
    std::vector<std::pair<Real, int>> screen;
    for (int c = 0; c < static_cast<int>(cands.size()); ++c) {
      set_selection(prob, cands[c]);
      const EstimateResult r = estimate_wls(prob, inc.state, opts.wls);
      if (r.cost < inc.cost) screen.emplace_back(r.cost, c);
    }
    std::sort(screen.begin(), screen.end());
    bool improved = false;
    for (int k = 0; k < static_cast<int>(screen.size()) && k < 3; ++k) {
      const std::vector<int>& m = cands[screen[k].second];
      const EstimateResult res = eval_mask(prob, m, opts);
      if (inc.accepts(res.cost, m)) {
        inc = Incumbent{res.cost, m, res.state};
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  return inc;
}

struct RelaxOut {
  Real bound = kInf;
  VectorXr s;
  VectorXr terms;
  StateVector v;
};

// Node relaxation: undecided entries take fractional selections with the
// remaining budget spent exactly. The joint (state, selection) problem is
// nonconvex, so it gets the same multistart budget as mask evaluations:
// each start alternates a warm state solve against the exact fractional
// knapsack fill, and the node bound is the best value seen anywhere. The
// knapsack leaves at most one fractional entry.
RelaxOut solve_relaxation(EstimationProblem& prob,
                          const std::vector<signed char>& fix, int R,
                          const std::vector<int>& w, const RobustOptions& opts,
                          const StateVector& v_hint) {
  const int L = static_cast<int>(fix.size());
  const int n = prob.net.bus_count();
  const int ref = prob.net.reference_bus();
  std::vector<int> free_idx;
  int wfree = 0;
  for (int j = 0; j < L; ++j)
    if (fix[j] < 0) {
      free_idx.push_back(j);
      wfree += w[j];
    }

  VectorXr s0(L);
  const Real fill =
      wfree > 0 ? std::min(Real(1), Real(std::max(R, 0)) / wfree) : 0.0;
  for (int j = 0; j < L; ++j) s0[j] = fix[j] < 0 ? fill : Real(fix[j]);

  const std::uint64_t node_seed = fix_seed(opts.seed, fix);
  RelaxOut out;

  auto knapsack = [&](const VectorXr& terms, VectorXr& s) {
    std::vector<int> order = free_idx;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const Real da = terms[a] / w[a], db = terms[b] / w[b];
      if (da != db) return da < db;
      return a < b;
    });
    Real rem = std::max(R, 0);
    for (int j : order) {
      const Real take = std::min(rem, Real(w[j]));
      s[j] = take / w[j];
      rem -= take;
    }
    Real value = 0;
    for (int j = 0; j < L; ++j) value += s[j] * terms[j];
    return value;
  };

  for (int start = 0; start <= opts.starts; ++start) {
    StateVector v = start == 0
                        ? v_hint
                        : random_start(n, ref, derive_seed(node_seed, start));
    VectorXr s = s0;
    Real prev = kInf;
    for (int round = 0; round < 20; ++round) {
      prob.selection = s;
      const EstimateResult r = estimate_wls(prob, v, opts.wls);
      v = r.state;
      const VectorXr terms = objective_terms(prob, v);
      const Real value = knapsack(terms, s);
      if (value < out.bound) {
        out.bound = value;
        out.s = s;
        out.terms = terms;
        out.v = v;
      }
      if (prev - value <= 1e-12 * std::max(Real(1), std::abs(value))) break;
      prev = value;
    }
  }
  return out;
}

struct Node {
  std::vector<signed char> fix;
  Real bound = 0;
  StateVector v_hint;
  long id = 0;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.id > b.id;
  }
};

struct Search {
  std::mutex mu;
  std::condition_variable cv;
  std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
  Incumbent inc;
  long nodes = 0;
  long next_id = 0;
  int active = 0;
  bool stop = false;
  Real min_dropped = kInf;
  Clock::time_point deadline;
  bool timed = false;
};

struct NodeView {
  std::vector<int> free_idx;
  int w_fixed1 = 0, w_free = 0, n1_free = 0, n2_free = 0;
};

NodeView view_of(const std::vector<signed char>& fix,
                 const std::vector<int>& w) {
  NodeView nv;
  for (int j = 0; j < static_cast<int>(fix.size()); ++j) {
    if (fix[j] == 1) nv.w_fixed1 += w[j];
    if (fix[j] < 0) {
      nv.free_idx.push_back(j);
      nv.w_free += w[j];
      (w[j] == 1 ? nv.n1_free : nv.n2_free) += 1;
    }
  }
  return nv;
}

bool child_feasible(const std::vector<signed char>& fix,
                    const std::vector<int>& w, int d, bool at_least) {
  const NodeView nv = view_of(fix, w);
  if (at_least) return nv.w_fixed1 + nv.w_free >= d;
  return reachable(d - nv.w_fixed1, nv.n1_free, nv.n2_free);
}

void bnb_worker(Search& S, const EstimationProblem& prob0,
                const std::vector<int>& w, int d, const RobustOptions& opts) {
  EstimationProblem prob = prob0;
  std::unique_lock<std::mutex> lk(S.mu);
  for (;;) {
    S.cv.wait(lk, [&] { return S.stop || !S.open.empty() || S.active == 0; });
    if (S.stop) break;
    if (S.open.empty()) {
      if (S.active == 0) break;
      continue;
    }
    Node nd = S.open.top();
    S.open.pop();
    const bool out_of_time = S.timed && Clock::now() >= S.deadline;
    const bool out_of_nodes = opts.node_limit > 0 && S.nodes >= opts.node_limit;
    if (out_of_time || out_of_nodes) {
      S.open.push(std::move(nd));
      S.stop = true;
      S.cv.notify_all();
      break;
    }
    if (nd.bound >= S.inc.cost - opts.gap) {
      S.min_dropped = std::min(S.min_dropped, nd.bound);
      continue;
    }
    ++S.active;
    ++S.nodes;
    lk.unlock();

    const NodeView nv = view_of(nd.fix, w);
    const int R = d - nv.w_fixed1;

    // Forced completions: budget spent, or every undecided entry needed.
    std::vector<int> forced;
    if (nv.free_idx.empty() || R <= 0 || R == nv.w_free) {
      forced.resize(nd.fix.size());
      for (int j = 0; j < static_cast<int>(nd.fix.size()); ++j)
        forced[j] = nd.fix[j] < 0 ? (R > 0 ? 1 : 0) : nd.fix[j];
    }

    if (!forced.empty()) {
      bool skip = false;
      {
        std::lock_guard<std::mutex> g(S.mu);
        skip = forced == S.inc.keep;
      }
      if (!skip) {
        const EstimateResult res = eval_mask(prob, forced, opts);
        lk.lock();
        if (S.inc.accepts(res.cost, forced))
          S.inc = Incumbent{res.cost, std::move(forced), res.state};
      } else {
        lk.lock();
      }
      --S.active;
      S.cv.notify_all();
      continue;
    }

    const RelaxOut relax =
        solve_relaxation(prob, nd.fix, R, w, opts, nd.v_hint);
    const Real bound = std::max(nd.bound, relax.bound);

    // Most fractional undecided entry; the knapsack fill leaves at most one.
    int branch = -1;
    for (int j : nv.free_idx) {
      if (relax.s[j] != 0.0 && relax.s[j] != 1.0) {
        if (branch < 0 ||
            std::abs(relax.s[j] - 0.5) < std::abs(relax.s[branch] - 0.5) ||
            (std::abs(relax.s[j] - 0.5) == std::abs(relax.s[branch] - 0.5) &&
             relax.terms[j] > relax.terms[branch]))
          branch = j;
      }
    }

    if (branch < 0) {
      // Integral relaxation. Its mask is an incumbent candidate, but the
      // inner solve is heuristic, so it cannot close the node: the subtree
      // may still hold a better mask. Record the candidate, then branch on
      // the marginal knapsack decision (the cheapest dropped free entry).
      std::vector<int> keep(nd.fix.size());
      for (int j = 0; j < static_cast<int>(keep.size()); ++j)
        keep[j] = nd.fix[j] < 0 ? (relax.s[j] != 0.0 ? 1 : 0) : nd.fix[j];
      bool known = false;
      {
        std::lock_guard<std::mutex> g(S.mu);
        known = keep == S.inc.keep;
      }
      if (!known) {
        const EstimateResult res = eval_mask(prob, keep, opts);
        std::lock_guard<std::mutex> g(S.mu);
        if (S.inc.accepts(res.cost, keep))
          S.inc = Incumbent{res.cost, std::move(keep), res.state};
      }
      for (int j : nv.free_idx) {
        if (relax.s[j] != 0.0) continue;
        if (branch < 0 ||
            relax.terms[j] / w[j] < relax.terms[branch] / w[branch])
          branch = j;
      }
      if (branch < 0) branch = nv.free_idx.front();
    }

    lk.lock();
    if (bound >= S.inc.cost - opts.gap) {
      S.min_dropped = std::min(S.min_dropped, bound);
    } else {
      for (int value : {1, 0}) {
        Node child;
        child.fix = nd.fix;
        child.fix[branch] = static_cast<signed char>(value);
        if (!child_feasible(child.fix, w, d, opts.at_least)) continue;
        child.bound = bound;
        child.v_hint = relax.v;
        child.id = S.next_id++;
        S.open.push(std::move(child));
      }
    }
    --S.active;
    S.cv.notify_all();
  }
  S.cv.notify_all();
}

RobustResult assemble(Search& S, int d) {
  RobustResult out;
  out.state = S.inc.state;
  out.mask = SelectionMask{S.inc.keep, d};
  out.cost = S.inc.cost;
  out.nodes_explored = S.nodes;
  Real lb = S.min_dropped;
  while (!S.open.empty()) {
    lb = std::min(lb, S.open.top().bound);
    S.open.pop();
  }
  out.proven = !S.stop;
  out.bound_gap = lb == kInf ? 0.0 : std::max(Real(0), S.inc.cost - lb);
  if (!out.proven && lb == kInf) out.bound_gap = kInf;
  return out;
}

}  // namespace

int SelectionMask::spent(const MeasurementSet& ms) const {
  int s = 0;
  for (int j = 0; j < static_cast<int>(keep.size()); ++j)
    if (keep[j]) s += budget_weight(ms.entries[j].kind);
  return s;
}

RobustResult solve_robust(const EstimationProblem& prob0, int d,
                          const RobustOptions& opts) {
  if (prob0.measurements.size() == 0)
    throw config_error("empty measurement set");
  const std::vector<int> w = budget_weights(prob0.measurements);
  check_budget(w, d, opts.at_least, prob0.net.bus_count());

  EstimationProblem prob = prob0;
  Search S;
  S.timed = opts.time_limit > 0;
  if (S.timed)
    S.deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                    std::chrono::duration<double>(
                                        opts.time_limit));
  S.inc = swap_improve(prob, trimmed_incumbent(prob, d, w, opts), d, w, opts);

  Node root;
  root.fix.assign(w.size(), -1);
  root.bound = 0.0;
  root.v_hint = S.inc.state;
  root.id = S.next_id++;
  S.open.push(std::move(root));

  const int workers =
      std::max(1, opts.workers > 0 ? opts.workers : thread_count());
  std::vector<std::thread> pool;
  for (int t = 1; t < workers; ++t)
    pool.emplace_back(bnb_worker, std::ref(S), std::cref(prob0), std::cref(w),
                      d, std::cref(opts));
  bnb_worker(S, prob0, w, d, opts);
  for (std::thread& t : pool) t.join();

  return assemble(S, d);
}

RobustResult enumerate_oracle(const EstimationProblem& prob0, int d,
                              const RobustOptions& opts) {
  const int L = prob0.measurements.size();
  if (L == 0) throw config_error("empty measurement set");
  if (L > 20)
    throw config_error("exhaustive enumeration limited to 20 entries, got " +
                       std::to_string(L));
  const std::vector<int> w = budget_weights(prob0.measurements);
  check_budget(w, d, opts.at_least, prob0.net.bus_count());

  EstimationProblem prob = prob0;
  Incumbent inc;
  long count = 0;
  std::vector<int> keep(L);
  for (std::uint64_t c = 0; c < (1ull << L); ++c) {
    int spent = 0;
    for (int j = 0; j < L; ++j) {
      keep[j] = static_cast<int>((c >> (L - 1 - j)) & 1ull);
      if (keep[j]) spent += w[j];
    }
    if (!budget_ok(spent, d, opts.at_least)) continue;
    const EstimateResult res = eval_mask(prob, keep, opts);
    ++count;
    if (res.cost < inc.cost) inc = Incumbent{res.cost, keep, res.state};
  }
  RobustResult out;
  out.state = inc.state;
  out.mask = SelectionMask{inc.keep, d};
  out.cost = inc.cost;
  out.nodes_explored = count;
  out.bound_gap = 0.0;
  out.proven = true;
  return out;
}

LassoResult solve_lasso(const EstimationProblem& prob0, Real r,
                        const LassoOptions& opts) {
  if (!(r > 0)) throw config_error("selection price r must be positive");
  if (prob0.measurements.size() == 0)
    throw config_error("empty measurement set");
  EstimationProblem prob = prob0;
  const int L = prob.measurements.size();
  const std::vector<int> w = budget_weights(prob.measurements);

  LassoResult out;
  VectorXr s = VectorXr::Ones(L);
  StateVector v;
  if (opts.init) {
    v = *opts.init;
    const VectorXr t = objective_terms(prob, v);
    for (int j = 0; j < L; ++j) s[j] = t[j] < r * w[j] ? 1.0 : 0.0;
  }
  const int max_rounds = std::max(1, opts.max_rounds);
  for (int round = 0; round < max_rounds; ++round) {
    prob.selection = s;
    const EstimateResult res =
        round == 0 && !opts.init
            ? multistart(prob, opts.starts, opts.seed, opts.wls)
            : estimate_wls(prob, v, opts.wls);
    v = res.state;
    const VectorXr t = objective_terms(prob, v);
    VectorXr s_new(L);
    for (int j = 0; j < L; ++j) s_new[j] = t[j] < r * w[j] ? 1.0 : 0.0;
    const bool fixed_point = (s_new.array() == s.array()).all();
    s = std::move(s_new);
    out.rounds = round + 1;
    if (fixed_point) {
      out.converged = true;
      break;
    }
  }
  out.state = v;
  out.selection = s;
  const VectorXr t = objective_terms(prob, v);
  out.data_cost = 0.0;
  Real dropped = 0.0;
  for (int j = 0; j < L; ++j) {
    out.data_cost += s[j] * t[j];
    dropped += w[j] * (1.0 - s[j]);
  }
  out.penalized_cost = out.data_cost + r * dropped;
  return out;
}

}  // namespace gridstate
