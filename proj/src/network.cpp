#include "gridstate/network.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace gridstate {

namespace {

constexpr Real kPi = 3.14159265358979323846;

// Strips %-comments, keeps everything else verbatim.
std::string strip_comments(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool in_comment = false;
  for (char c : text) {
    if (c == '%') in_comment = true;
    if (c == '\n') in_comment = false;
    if (!in_comment) out.push_back(c);
  }
  return out;
}

// Extracts the bracketed matrix following "mpc.<field> = [ ... ];".
// Rows split on ';' or newline, entries on whitespace or commas.
std::vector<std::vector<Real>> parse_matrix(const std::string& text,
                                            const std::string& field,
                                            bool required) {
  const std::string key = "mpc." + field;
  size_t pos = text.find(key);
  if (pos == std::string::npos) {
    if (required) throw config_error("case file: missing " + key);
    return {};
  }
  pos = text.find('[', pos);
  if (pos == std::string::npos)
    throw config_error("case file: malformed " + key);
  size_t end = text.find(']', pos);
  if (end == std::string::npos)
    throw config_error("case file: unterminated " + key);
  std::string body = text.substr(pos + 1, end - pos - 1);
  for (char& c : body) {
    if (c == ',') c = ' ';
    if (c == '\n' || c == '\r') c = ';';
  }
  std::vector<std::vector<Real>> rows;
  std::stringstream row_stream(body);
  std::string row_text;
  while (std::getline(row_stream, row_text, ';')) {
    std::istringstream entries(row_text);
    std::vector<Real> row;
    std::string tok;
    while (entries >> tok) {
      try {
        size_t used = 0;
        row.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw config_error("case file: bad numeric entry '" + tok + "' in " +
                           key);
      }
    }
    if (!row.empty()) rows.push_back(std::move(row));
  }
  return rows;
}

Real parse_scalar(const std::string& text, const std::string& field) {
  const std::string key = "mpc." + field;
  size_t pos = text.find(key);
  if (pos == std::string::npos) throw config_error("case file: missing " + key);
  pos = text.find('=', pos);
  if (pos == std::string::npos)
    throw config_error("case file: malformed " + key);
  size_t stop = text.find(';', pos);
  std::string body = text.substr(pos + 1, stop - pos - 1);
  try {
    return std::stod(body);
  } catch (const std::exception&) {
    throw config_error("case file: bad value for " + key);
  }
}

}  // namespace

int Network::reference_bus() const {
  for (int i = 0; i < bus_count(); ++i)
    if (buses[i].is_reference) return i;
  return 0;
}

int Network::internal_index(int external_id) const {
  for (int i = 0; i < bus_count(); ++i)
    if (bus_ids[i] == external_id) return i;
  return -1;
}

CaseFile parse_case_file(const std::string& text) {
  const std::string clean = strip_comments(text);
  CaseFile cf;
  Network& net = cf.network;
  net.base_mva = parse_scalar(clean, "baseMVA");
  if (!(net.base_mva > 0))
    throw config_error("case file: baseMVA must be positive");

  auto bus_rows = parse_matrix(clean, "bus", true);
  if (bus_rows.empty()) throw config_error("case file: empty bus table");
  std::unordered_map<int, int> index_of;
  std::vector<Real> vm, va;
  int reference = -1;
  for (const auto& row : bus_rows) {
    if (row.size() < 8)
      throw config_error("case file: bus row needs at least 8 columns");
    // Reduced layout: id type Pd Qd Gs Bs Vm Va. Standard layout inserts the
    // area column before Vm.
    const bool reduced = row.size() == 8;
    Bus bus;
    bus.id = static_cast<int>(row[0]);
    const int type = static_cast<int>(row[1]);
    bus.gs = row[4];
    bus.bs = row[5];
    bus.shunt = Complex(bus.gs, bus.bs) / net.base_mva;
    if (index_of.count(bus.id))
      throw config_error("case file: duplicate bus id " +
                         std::to_string(bus.id));
    index_of[bus.id] = net.bus_count();
    if (type == 3 && reference < 0) reference = net.bus_count();
    vm.push_back(reduced ? row[6] : row[7]);
    va.push_back(reduced ? row[7] : row[8]);
    net.bus_ids.push_back(bus.id);
    net.buses.push_back(bus);
  }
  if (reference < 0) {
    // No slack designation: the lowest external id becomes the reference.
    reference = static_cast<int>(std::min_element(net.bus_ids.begin(),
                                                  net.bus_ids.end()) -
                                 net.bus_ids.begin());
  }
  net.buses[reference].is_reference = true;

  for (const auto& row : parse_matrix(clean, "branch", true)) {
    if (row.size() < 8)
      throw config_error("case file: branch row needs at least 8 columns");
    const bool reduced = row.size() < 11;
    Branch br;
    const int from_id = static_cast<int>(row[0]);
    const int to_id = static_cast<int>(row[1]);
    auto it_f = index_of.find(from_id);
    auto it_t = index_of.find(to_id);
    if (it_f == index_of.end() || it_t == index_of.end())
      throw config_error("case file: branch references unknown bus");
    br.from = it_f->second;
    br.to = it_t->second;
    br.r = row[2];
    br.x = row[3];
    const Complex z(br.r, br.x);
    if (z == Complex(0, 0))
      throw config_error("case file: branch with zero impedance");
    br.series = Complex(1, 0) / z;
    br.charging = row[4];
    const Real ratio = reduced ? row[5] : row[8];
    const Real angle = reduced ? row[6] : row[9];
    const Real status = reduced ? row[7] : row[10];
    br.tap = ratio == 0.0 ? 1.0 : ratio;
    br.shift = angle * kPi / 180.0;
    if (status == 0.0) continue;
    net.branches.push_back(br);
  }

  cf.state.resize(net.bus_count());
  for (int i = 0; i < net.bus_count(); ++i)
    cf.state[i] = std::polar(vm[i], va[i] * kPi / 180.0);
  return cf;
}

Network parse_case(const std::string& text) {
  return parse_case_file(text).network;
}

CaseFile load_case(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open case file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_case_file(buf.str());
}

std::string emit_case(const Network& net, const StateVector* state) {
  char line[512];
  std::string out = "function mpc = case_export\n";
  out += "mpc.version = '2';\n";
  std::snprintf(line, sizeof(line), "mpc.baseMVA = %.17g;\n", net.base_mva);
  out += line;
  out += "mpc.bus = [\n";
  for (int i = 0; i < net.bus_count(); ++i) {
    const Bus& b = net.buses[i];
    Real vm = 1.0, va = 0.0;
    if (state) {
      vm = std::abs((*state)[i]);
      va = std::arg((*state)[i]) * 180.0 / kPi;
    }
    const bool raw = b.gs != 0.0 || b.bs != 0.0 || b.shunt == Complex(0, 0);
    const Real gs = raw ? b.gs : b.shunt.real() * net.base_mva;
    const Real bs = raw ? b.bs : b.shunt.imag() * net.base_mva;
    std::snprintf(line, sizeof(line), "%d %d 0 0 %.17g %.17g %.17g %.17g;\n",
                  b.id, b.is_reference ? 3 : 1, gs, bs, vm, va);
    out += line;
  }
  out += "];\n";
  out += "mpc.branch = [\n";
  for (const Branch& br : net.branches) {
    const Complex z = br.r != 0.0 || br.x != 0.0 ? Complex(br.r, br.x)
                                                 : Complex(1, 0) / br.series;
    std::snprintf(line, sizeof(line),
                  "%d %d %.17g %.17g %.17g %.17g %.17g 1;\n",
                  net.bus_ids[br.from], net.bus_ids[br.to], z.real(), z.imag(),
                  br.charging, br.tap == 1.0 ? 0.0 : br.tap,
                  br.shift * 180.0 / kPi);
    out += line;
  }
  out += "];\n";
  return out;
}

template <typename Scalar>
DenseMatrix<Scalar> bus_admittance(const Network& net) {
  using RealT = typename Scalar::value_type;
  const int n = net.bus_count();
  DenseMatrix<Scalar> y = DenseMatrix<Scalar>::Zero(n, n);
  for (int i = 0; i < n; ++i) y(i, i) += Scalar(net.buses[i].shunt);
  for (const Branch& br : net.branches) {
    const Scalar ys(br.series);
    const Scalar half_charge(RealT(0), RealT(br.charging) / RealT(2));
    const RealT tau(br.tap);
    const Scalar ratio = std::polar(tau, RealT(br.shift));
    y(br.from, br.from) += (ys + half_charge) / (tau * tau);
    y(br.to, br.to) += ys + half_charge;
    y(br.from, br.to) -= ys / std::conj(ratio);
    y(br.to, br.from) -= ys / ratio;
  }
  return y;
}

template <typename Scalar>
BranchAdmittanceT<Scalar> branch_admittance(const Network& net) {
  using RealT = typename Scalar::value_type;
  const int n = net.bus_count();
  const int m = net.branch_count();
  BranchAdmittanceT<Scalar> out;
  out.from = DenseMatrix<Scalar>::Zero(m, n);
  out.to = DenseMatrix<Scalar>::Zero(m, n);
  for (int l = 0; l < m; ++l) {
    const Branch& br = net.branches[l];
    const Scalar ys(br.series);
    const Scalar half_charge(RealT(0), RealT(br.charging) / RealT(2));
    const RealT tau(br.tap);
    const Scalar ratio = std::polar(tau, RealT(br.shift));
    out.from(l, br.from) = (ys + half_charge) / (tau * tau);
    out.from(l, br.to) = -ys / std::conj(ratio);
    out.to(l, br.from) = -ys / ratio;
    out.to(l, br.to) = ys + half_charge;
  }
  return out;
}

template DenseMatrix<Complex> bus_admittance<Complex>(const Network&);
template BranchAdmittanceT<Complex> branch_admittance<Complex>(const Network&);
template DenseMatrix<std::complex<long double>>
bus_admittance<std::complex<long double>>(const Network&);
template BranchAdmittanceT<std::complex<long double>>
branch_admittance<std::complex<long double>>(const Network&);

}  // namespace gridstate
