#pragma once

// Double-double scalar for the interior point endgame. Nearly degenerate
// moment relaxations push the Schur complement past condition 1e19, which
// no hardware float can factor meaningfully; an unevaluated pair of doubles
// maintained with error-free transforms (Dekker products, Knuth sums, the
// algorithms collected in the QD library) carries ~32 decimal digits at
// tolerable cost. Only what the solver touches is implemented: field
// operations, comparisons, sqrt, abs, and the Eigen scalar traits.

#include <cmath>
#include <limits>

#include <Eigen/Core>

namespace gridstate::detail {

struct dd {
  double hi = 0;
  double lo = 0;  // invariant: |lo| <= ulp(hi) / 2

  dd() = default;
  dd(double h) : hi(h) {}  // NOLINT: implicit, like double -> long double
  dd(int h) : hi(h) {}     // NOLINT
  dd(double h, double l) : hi(h), lo(l) {}
  explicit operator double() const { return hi; }

  dd& operator+=(const dd& o);
  dd& operator-=(const dd& o);
  dd& operator*=(const dd& o);
  dd& operator/=(const dd& o);
};

// s + err == a + b exactly.
inline dd two_sum(double a, double b) {
  const double s = a + b;
  const double bb = s - a;
  return {s, (a - (s - bb)) + (b - bb)};
}

// Same contract, requires |a| >= |b| or a == 0.
inline dd fast_two_sum(double a, double b) {
  const double s = a + b;
  return {s, b - (s - a)};
}

// p + err == a * b exactly.
inline dd two_prod(double a, double b) {
  const double p = a * b;
  return {p, std::fma(a, b, -p)};
}

inline dd operator+(const dd& a, const dd& b) {
  dd s = two_sum(a.hi, b.hi);
  const dd t = two_sum(a.lo, b.lo);
  s.lo += t.hi;
  s = fast_two_sum(s.hi, s.lo);
  s.lo += t.lo;
  return fast_two_sum(s.hi, s.lo);
}

inline dd operator-(const dd& a) { return {-a.hi, -a.lo}; }

inline dd operator-(const dd& a, const dd& b) { return a + (-b); }

inline dd operator*(const dd& a, const dd& b) {
  dd p = two_prod(a.hi, b.hi);
  p.lo += a.hi * b.lo + a.lo * b.hi;
  return fast_two_sum(p.hi, p.lo);
}

inline dd operator/(const dd& a, const dd& b) {
  const double q1 = a.hi / b.hi;
  dd r = a - dd(q1) * b;
  const double q2 = r.hi / b.hi;
  r = r - dd(q2) * b;
  const double q3 = r.hi / b.hi;
  return fast_two_sum(q1, q2) + dd(q3);
}

inline dd& dd::operator+=(const dd& o) { return *this = *this + o; }
inline dd& dd::operator-=(const dd& o) { return *this = *this - o; }
inline dd& dd::operator*=(const dd& o) { return *this = *this * o; }
inline dd& dd::operator/=(const dd& o) { return *this = *this / o; }

inline bool operator==(const dd& a, const dd& b) {
  return a.hi == b.hi && a.lo == b.lo;
}
inline bool operator!=(const dd& a, const dd& b) { return !(a == b); }
inline bool operator<(const dd& a, const dd& b) {
  return a.hi < b.hi || (a.hi == b.hi && a.lo < b.lo);
}
inline bool operator>(const dd& a, const dd& b) { return b < a; }
inline bool operator<=(const dd& a, const dd& b) { return !(b < a); }
inline bool operator>=(const dd& a, const dd& b) { return !(a < b); }

inline dd sqrt(const dd& a) {
  if (a.hi == 0 && a.lo == 0) return dd(0);
  // Karp-Markstein: one dd-accurate Newton correction of the double root.
  const double x = 1.0 / std::sqrt(a.hi);
  const dd y(a.hi * x);
  const dd err = a - y * y;
  return y + dd(err.hi * (x * 0.5));
}

inline dd abs(const dd& a) { return a.hi < 0 ? -a : a; }

inline bool isfinite(const dd& a) { return std::isfinite(a.hi); }
inline bool isnan(const dd& a) { return std::isnan(a.hi); }
inline bool isinf(const dd& a) { return std::isinf(a.hi); }

}  // namespace gridstate::detail

namespace std {

template <>
struct numeric_limits<gridstate::detail::dd> {
  static constexpr bool is_specialized = true;
  static constexpr bool is_signed = true;
  static constexpr bool is_integer = false;
  static constexpr bool is_exact = false;
  static constexpr bool has_infinity = true;
  static constexpr bool has_quiet_NaN = true;
  static constexpr int digits = 104;
  static constexpr int digits10 = 31;
  static gridstate::detail::dd epsilon() { return {4.93038065763132e-32, 0}; }
  static gridstate::detail::dd round_error() { return {0.5, 0}; }
  static gridstate::detail::dd min() {
    return {numeric_limits<double>::min(), 0};
  }
  static gridstate::detail::dd max() {
    return {numeric_limits<double>::max(), 0};
  }
  static gridstate::detail::dd lowest() {
    return {-numeric_limits<double>::max(), 0};
  }
  static gridstate::detail::dd infinity() {
    return {numeric_limits<double>::infinity(), 0};
  }
  static gridstate::detail::dd quiet_NaN() {
    return {numeric_limits<double>::quiet_NaN(), 0};
  }
};

}  // namespace std

namespace Eigen {

template <>
struct NumTraits<gridstate::detail::dd>
    : GenericNumTraits<gridstate::detail::dd> {
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 0,
    ReadCost = 2,
    AddCost = 8,
    MulCost = 16
  };
  static inline gridstate::detail::dd epsilon() {
    return std::numeric_limits<gridstate::detail::dd>::epsilon();
  }
  static inline gridstate::detail::dd dummy_precision() { return {1e-28, 0}; }
  static inline gridstate::detail::dd highest() {
    return std::numeric_limits<gridstate::detail::dd>::max();
  }
  static inline gridstate::detail::dd lowest() {
    return std::numeric_limits<gridstate::detail::dd>::lowest();
  }
  static inline int digits10() { return 31; }
};

}  // namespace Eigen
