#pragma once

// Forward-mode dual numbers over the complex field.
//
// A Jet<N> carries a complex value and N complex partial derivatives with
// respect to real parameters. Every theta-series routine is templated on its
// scalar, so instantiating it with Jet<N> yields exact Jacobians of the
// auxiliary-parameter residuals without hand-derived chain rules.

#include <array>
#include <complex>
#include <cstddef>
#include <type_traits>

namespace damflow {

using cplx = std::complex<double>;

template <int N>
struct Jet {
  cplx v{};
  std::array<cplx, N> d{};

  Jet() = default;
  Jet(cplx value) : v(value) {}  // NOLINT(google-explicit-constructor)
  Jet(double value) : v(value) {}  // NOLINT(google-explicit-constructor)

  // Independent variable number `k` with the given (real) value.
  static Jet variable(double value, int k) {
    Jet j(value);
    j.d[static_cast<std::size_t>(k)] = 1.0;
    return j;
  }

  Jet& operator+=(const Jet& o) {
    v += o.v;
    for (int k = 0; k < N; ++k) d[k] += o.d[k];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    v -= o.v;
    for (int k = 0; k < N; ++k) d[k] -= o.d[k];
    return *this;
  }
  Jet& operator*=(const Jet& o) {
    for (int k = 0; k < N; ++k) d[k] = d[k] * o.v + v * o.d[k];
    v *= o.v;
    return *this;
  }
  Jet& operator/=(const Jet& o) {
    const cplx inv = 1.0 / o.v;
    for (int k = 0; k < N; ++k) d[k] = (d[k] - v * inv * o.d[k]) * inv;
    v *= inv;
    return *this;
  }
  Jet& operator*=(cplx s) {
    v *= s;
    for (auto& x : d) x *= s;
    return *this;
  }
  Jet operator-() const {
    Jet r = *this;
    r *= cplx(-1.0);
    return r;
  }
};

template <int N> Jet<N> operator+(Jet<N> a, const Jet<N>& b) { return a += b; }
template <int N> Jet<N> operator-(Jet<N> a, const Jet<N>& b) { return a -= b; }
template <int N> Jet<N> operator*(Jet<N> a, const Jet<N>& b) { return a *= b; }
template <int N> Jet<N> operator/(Jet<N> a, const Jet<N>& b) { return a /= b; }
template <int N> Jet<N> operator*(Jet<N> a, cplx s) { return a *= s; }
template <int N> Jet<N> operator*(cplx s, Jet<N> a) { return a *= s; }
template <int N> Jet<N> operator*(Jet<N> a, double s) { return a *= cplx(s); }
template <int N> Jet<N> operator*(double s, Jet<N> a) { return a *= cplx(s); }
template <int N> Jet<N> operator+(Jet<N> a, cplx s) { a.v += s; return a; }
template <int N> Jet<N> operator+(cplx s, Jet<N> a) { a.v += s; return a; }
template <int N> Jet<N> operator-(Jet<N> a, cplx s) { a.v -= s; return a; }
template <int N> Jet<N> operator-(cplx s, const Jet<N>& a) { return Jet<N>(s) - a; }
template <int N> Jet<N> operator/(Jet<N> a, cplx s) { return a *= (1.0 / s); }
template <int N> Jet<N> operator/(cplx s, const Jet<N>& a) { return Jet<N>(s) / a; }

template <int N>
Jet<N> exp(const Jet<N>& a) {
  Jet<N> r(std::exp(a.v));
  for (int k = 0; k < N; ++k) r.d[k] = r.v * a.d[k];
  return r;
}

template <int N>
Jet<N> log(const Jet<N>& a) {
  Jet<N> r(std::log(a.v));
  const cplx inv = 1.0 / a.v;
  for (int k = 0; k < N; ++k) r.d[k] = a.d[k] * inv;
  return r;
}

template <int N>
Jet<N> sqrt(const Jet<N>& a) {
  Jet<N> r(std::sqrt(a.v));
  const cplx half_inv = 0.5 / r.v;
  for (int k = 0; k < N; ++k) r.d[k] = a.d[k] * half_inv;
  return r;
}

// Real cube root of a real-valued scalar.
inline cplx real_cbrt(cplx x) { return std::cbrt(x.real()); }
template <int N>
Jet<N> real_cbrt(const Jet<N>& a) {
  Jet<N> r(std::cbrt(a.v.real()));
  const double s = 3.0 * r.v.real() * r.v.real();
  for (int k = 0; k < N; ++k) r.d[k] = a.d[k] / s;
  return r;
}

// Uniform accessors so templated code can branch on numeric values.
inline cplx value_of(cplx x) { return x; }
inline double value_of(double x) { return x; }
template <int N> cplx value_of(const Jet<N>& x) { return x.v; }

template <class T> struct is_jet : std::false_type {};
template <int N> struct is_jet<Jet<N>> : std::true_type {};

// Real part / imaginary part as a scalar of the same kind (derivatives
// projected accordingly; valid because the parameters are real).
inline cplx real_part(cplx x) { return x.real(); }
inline cplx imag_part(cplx x) { return x.imag(); }
template <int N>
Jet<N> real_part(const Jet<N>& x) {
  Jet<N> r(x.v.real());
  for (int k = 0; k < N; ++k) r.d[k] = x.d[k].real();
  return r;
}
template <int N>
Jet<N> imag_part(const Jet<N>& x) {
  Jet<N> r(x.v.imag());
  for (int k = 0; k < N; ++k) r.d[k] = x.d[k].imag();
  return r;
}

}  // namespace damflow
