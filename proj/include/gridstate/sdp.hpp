#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gridstate/estimation.hpp"
#include "gridstate/types.hpp"

namespace gridstate {

// Multi-index exponent vector, one entry per real variable.
using MultiIndex = std::vector<int>;

MultiIndex multi_add(const MultiIndex& a, const MultiIndex& b);
int multi_degree(const MultiIndex& a);

// Sparse polynomial over real variables.
struct Polynomial {
  std::map<MultiIndex, Real> terms;

  int degree() const;
  Real& coeff(const MultiIndex& alpha);
  void add(const MultiIndex& alpha, Real value);
  Real evaluate(const VectorXr& x) const;
};

enum class ConstraintSense { ge, eq };

struct PopConstraint {
  Polynomial g;
  ConstraintSense sense = ConstraintSense::ge;
};

// Polynomial minimization problem: min f(x) s.t. g_i(x) >= 0 or g_i(x) == 0.
struct PopProblem {
  int n_vars = 0;
  Polynomial objective;
  std::vector<PopConstraint> constraints;
};

// All monomials of total degree <= degree, graded ascending, within a degree
// lexicographic with earlier variables first: 1, x1, .., xn, x1^2, x1 x2, ...
struct MonomialBasis {
  int n_vars = 0;
  int degree = 0;
  std::vector<MultiIndex> monomials;
  std::map<MultiIndex, int> position;

  int size() const { return static_cast<int>(monomials.size()); }
  // Position of a multi-index; throws config_error when it is not in range.
  int index_of(const MultiIndex& alpha) const;
};

// Refuses bases beyond 1e5 monomials.
MonomialBasis build_basis(int n_vars, int degree);

// Moment vector of a point: y_alpha = x^alpha over the given basis.
VectorXr point_moments(const MonomialBasis& basis, const VectorXr& x);

// M_d(y): entry (a, b) = y_{a+b}; y indexed by a basis of order >= 2d.
MatrixXr moment_matrix(const MonomialBasis& row_basis,
                       const MonomialBasis& y_basis, const VectorXr& y);

// Localizing matrix of g at order d_row: entry (a, b) = sum_g g_c y_{c+a+b}.
MatrixXr localizing_matrix(const Polynomial& g, const MonomialBasis& row_basis,
                           const MonomialBasis& y_basis, const VectorXr& y);

// One linear-matrix-inequality block: sum_k y_{var[k]} scatter into
// (row, col) and its mirror. Variable index 0 is the fixed moment y_0 = 1.
struct SdpEntry {
  int row = 0;
  int col = 0;  // row <= col
  int var = 0;
  Real value = 0;
};

struct SdpBlock {
  int size = 0;
  std::vector<SdpEntry> entries;
};

// Moment relaxation in block LMI form over the moment vector y (index 0 is
// y_0 = 1): minimize objective . y subject to every block PSD.
struct SdpProblem {
  int n_vars = 0;        // POP variables (metadata)
  int order = 0;         // relaxation order d (metadata)
  int n_moments = 0;     // length of y including the fixed y_0
  VectorXr objective;    // over y; entry 0 is the constant part
  std::vector<SdpBlock> blocks;
};

// Moment SDP of order d. Equalities become two-sided localizing bands
// g <= delta, g >= -delta; delta <= 0 with equalities present is refused
// because the exact pair has empty interior (no strictly feasible point).
SdpProblem build_moment_sdp(const PopProblem& pop, int d, Real delta);

enum class SdpStatus { converged, failed };

struct SdpOptions {
  Real tol = 1e-7;          // relative duality gap and residual target
  int max_iterations = 200;
  // Warm start: previous moment vector (length n_moments, entry 0 ignored).
  std::optional<VectorXr> init;
};

struct SdpResult {
  VectorXr y;          // moment vector, y[0] == 1
  Real bound = 0;      // objective . y at the final iterate
  SdpStatus status = SdpStatus::failed;
  int iterations = 0;
  Real rel_gap = 0;
};

// Primal-dual interior-point solve of the block LMI form. Refuses problems
// with more than 2000 moment variables.
SdpResult solve_sdp(const SdpProblem& sdp, const SdpOptions& opts = {});

// If the order-1 moment matrix of y is numerically rank one
// (lambda2/lambda1 <= 1e-6), the scaled top eigenvector is the minimizer
// candidate; otherwise nothing.
std::optional<VectorXr> extract_point(const MonomialBasis& y_basis,
                                      const VectorXr& y);

// Estimation problem in polynomial form. Variables: Re v for every bus,
// Im v for non-reference buses, then one auxiliary variable per distinct
// measured SCADA quantity tied to its quadratic form by an equality.
struct EstimationPop {
  PopProblem pop;
  int n_bus = 0;
  int ref = 0;
  std::vector<int> vre;  // variable index per bus
  std::vector<int> vim;  // -1 for the reference bus
  // Measured quantity behind each auxiliary variable, in layout order; the
  // variable index is 2 * n_bus - 1 + position.
  std::vector<std::pair<MeasKind, int>> aux;
};

// Selection multipliers are folded into the weights; zero-selected entries
// drop out. A sign cut Re v_ref >= 0 replaces the removed gauge freedom.
EstimationPop build_estimation_pop(const EstimationProblem& prob);

// Real coordinates of a state in the POP variable layout, auxiliaries set
// consistently, so the point is feasible at any delta > 0.
VectorXr pop_point(const EstimationPop& pop, const EstimationProblem& prob,
                   const StateVector& v);

// extract_point mapped back to a complex state.
std::optional<StateVector> extract_candidate(const EstimationPop& pop,
                                             const MonomialBasis& y_basis,
                                             const VectorXr& y);

// Sparse SDPA text of the block LMI; entries in bit-stable order. The
// objective constant rides along in an *OFFSET comment.
std::string export_sdpa(const SdpProblem& sdp);

// Inverse of export_sdpa for files it wrote (n_vars/order metadata is not
// part of the format and stays zero).
SdpProblem parse_sdpa(const std::string& text);

}  // namespace gridstate
