#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gridstate/types.hpp"

namespace gridstate {

struct Bus {
  int id = 0;                 // external id from the case file
  Complex shunt{0.0, 0.0};    // bus shunt admittance, per unit
  bool is_reference = false;
  Real gs = 0.0, bs = 0.0;    // as-parsed shunt columns, for lossless emission
};

// Pi-model branch with an ideal tap*exp(i*shift) transformer at the from side.
// Parallel branches are kept as separate records; only the matrix builders sum
// their stamps.
struct Branch {
  int from = 0;               // internal bus index
  int to = 0;                 // internal bus index
  Complex series{0.0, 0.0};   // y = 1/(r + ix)
  Real charging = 0.0;        // total line charging susceptance b
  Real tap = 1.0;             // off-nominal ratio, 1 = none
  Real shift = 0.0;           // phase shift, radians
  Real r = 0.0, x = 0.0;      // as-parsed impedance, for lossless emission
};

struct Network {
  Real base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<int> bus_ids;   // internal index -> external id

  int bus_count() const { return static_cast<int>(buses.size()); }
  int branch_count() const { return static_cast<int>(branches.size()); }
  int reference_bus() const;
  int internal_index(int external_id) const;  // -1 when absent
};

// Case file plus the voltage profile stored in its Vm/Va columns.
struct CaseFile {
  Network network;
  StateVector state;
};

// MATPOWER-compatible text subset: mpc.baseMVA, mpc.bus, mpc.branch.
// Bus rows are either the 8-column reduced layout
//   id type Pd Qd Gs Bs Vm Va
// or the standard 13-column layout; branch rows either
//   fbus tbus r x b ratio angle status
// or the standard 13-column layout. Extra columns are ignored, out-of-service
// branches are dropped, Pd/Qd are documentation only. Throws config_error.
CaseFile parse_case_file(const std::string& text);
Network parse_case(const std::string& text);
CaseFile load_case(const std::string& path);

// Reduced 8-column layout, round-trip exact. The optional state fills Vm/Va.
std::string emit_case(const Network& net,
                      const StateVector* state = nullptr);

// Bus admittance matrix. Branch stamps follow the pi model with the ideal
// transformer on the from side; bus shunts land on the diagonal.
template <typename Scalar = Complex>
DenseMatrix<Scalar> bus_admittance(const Network& net);

// From-side and to-side branch admittance matrices: i_f = from * v injects
// into branch l at its from terminal, i_t = to * v at its to terminal.
template <typename Scalar>
struct BranchAdmittanceT {
  DenseMatrix<Scalar> from;
  DenseMatrix<Scalar> to;
};
using BranchAdmittance = BranchAdmittanceT<Complex>;

template <typename Scalar = Complex>
BranchAdmittanceT<Scalar> branch_admittance(const Network& net);

extern template DenseMatrix<Complex> bus_admittance<Complex>(const Network&);
extern template BranchAdmittanceT<Complex> branch_admittance<Complex>(
    const Network&);
extern template DenseMatrix<std::complex<long double>>
bus_admittance<std::complex<long double>>(const Network&);
extern template BranchAdmittanceT<std::complex<long double>>
branch_admittance<std::complex<long double>>(const Network&);

}  // namespace gridstate
