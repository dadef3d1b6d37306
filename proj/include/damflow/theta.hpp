#pragma once

// Genus-2 Riemann theta functions.
//
//   theta(u, Pi) = sum_{m in Z^2} exp(2 pi i m.u + pi i m.Pi.m)
//
//   theta[2e, 2e'](u, Pi) = sum_m exp(2 pi i (m+e).(u+e') + pi i (m+e).Pi.(m+e))
//
// Characteristics are kept in halved form (e, e' in {0, 1/2} for integer
// characteristics). At the interfaces they are displayed the classical way,
// as a 2x2 binary matrix whose first column is 2e and second column is 2e'.
//
// The lattice sweep is centered on the maximum of the Gaussian envelope
// |term| = exp(-pi n.Omega.n - 2 pi n.Im(u)), so the truncation error is
// controlled relative to that envelope for any u, not only for real u.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <initializer_list>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

#include "damflow/jet.hpp"

namespace damflow {

template <class S>
using Vec2 = std::array<S, 2>;

using Vec2c = Vec2<cplx>;
using Vec2d = Vec2<double>;

/// Symmetric 2x2 matrix stored by its three distinct entries.
template <class S>
struct SymMat2 {
  S a11{}, a12{}, a22{};
};

using SymMat2d = SymMat2<double>;

/// Raised when a theta series cannot meet the requested tolerance.
class SeriesError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SeriesControl {
  double target_tol = 1e-12;
  int max_radius = 40;

  void validate() const {
    if (!(target_tol > 0.0) || max_radius < 1)
      throw std::invalid_argument("SeriesControl: need target_tol > 0 and max_radius >= 1");
  }
};

inline double min_eigenvalue(const SymMat2d& m) {
  const double mean = 0.5 * (m.a11 + m.a22);
  const double diff = 0.5 * (m.a11 - m.a22);
  return mean - std::hypot(diff, m.a12);
}

/// Riemann matrix Pi (symmetric, positive definite imaginary part).
class RiemannMatrix {
 public:
  // Throws std::invalid_argument unless Pi is symmetric with Im Pi > 0.
  RiemannMatrix(cplx p11, cplx p12, cplx p21, cplx p22) {
    const double scale = std::max({std::abs(p11), std::abs(p22), std::abs(p12), 1.0});
    if (std::abs(p12 - p21) > 1e-12 * scale)
      throw std::invalid_argument("RiemannMatrix: Pi is not symmetric");
    pi_ = {p11, 0.5 * (p12 + p21), p22};
    if (!(min_eigenvalue(omega()) > 0.0))
      throw std::invalid_argument("RiemannMatrix: Im Pi is not positive definite");
  }

  /// Purely imaginary Pi = i * Omega.
  static RiemannMatrix from_omega(const SymMat2d& omega) {
    const cplx i(0.0, 1.0);
    return {i * omega.a11, i * omega.a12, i * omega.a12, i * omega.a22};
  }

  const SymMat2<cplx>& pi() const { return pi_; }
  SymMat2d omega() const { return {pi_.a11.imag(), pi_.a12.imag(), pi_.a22.imag()}; }

 private:
  SymMat2<cplx> pi_;
};

enum class Parity { even, odd };

/// Theta characteristic [e, e'] in halved form.
struct ThetaCharacteristic {
  Vec2d eps{0.0, 0.0};
  Vec2d eps_prime{0.0, 0.0};

  /// From the displayed binary matrix: rows are (2e_s, 2e'_s), s = 1, 2.
  static ThetaCharacteristic from_rows(std::array<int, 2> row1, std::array<int, 2> row2) {
    for (int v : {row1[0], row1[1], row2[0], row2[1]})
      if (v != 0 && v != 1)
        throw std::invalid_argument("ThetaCharacteristic: integer entries must be 0 or 1");
    return {{0.5 * row1[0], 0.5 * row2[0]}, {0.5 * row1[1], 0.5 * row2[1]}};
  }

  bool is_integer() const {
    for (double v : {eps[0], eps[1], eps_prime[0], eps_prime[1]}) {
      const double twice = 2.0 * v;
      if (std::abs(twice - std::round(twice)) > 1e-14) return false;
    }
    return true;
  }

  /// Displayed binary matrix, reduced mod 2. Requires an integer characteristic.
  std::array<std::array<int, 2>, 2> rows() const {
    if (!is_integer()) throw std::logic_error("ThetaCharacteristic: not an integer characteristic");
    auto bit = [](double v) {
      const int k = static_cast<int>(std::lround(2.0 * v)) % 2;
      return k < 0 ? k + 2 : k;
    };
    return {{{bit(eps[0]), bit(eps_prime[0])}, {bit(eps[1]), bit(eps_prime[1])}}};
  }

  bool operator==(const ThetaCharacteristic&) const = default;

  std::string to_string() const {
    std::ostringstream os;
    if (is_integer()) {
      const auto r = rows();
      os << '[' << r[0][0] << r[0][1] << '/' << r[1][0] << r[1][1] << ']';
    } else {
      os << "[(" << eps[0] << ',' << eps[1] << "),(" << eps_prime[0] << ',' << eps_prime[1] << ")]";
    }
    return os.str();
  }
};

/// Entry-wise sum modulo 2 of integer characteristics.
inline ThetaCharacteristic operator+(const ThetaCharacteristic& a, const ThetaCharacteristic& b) {
  const auto ra = a.rows();
  const auto rb = b.rows();
  return ThetaCharacteristic::from_rows({(ra[0][0] + rb[0][0]) % 2, (ra[0][1] + rb[0][1]) % 2},
                                        {(ra[1][0] + rb[1][0]) % 2, (ra[1][1] + rb[1][1]) % 2});
}

/// Parity of 4 e.e' for an integer characteristic.
inline Parity char_parity(const ThetaCharacteristic& c) {
  const auto r = c.rows();
  const int inner = r[0][0] * r[0][1] + r[1][0] * r[1][1];
  return inner % 2 == 0 ? Parity::even : Parity::odd;
}

/// Characteristic of the Abel-Jacobi image of branch point p_s (base point p_1).
inline ThetaCharacteristic branch_characteristic(int s) {
  switch (s) {
    case 1: return ThetaCharacteristic::from_rows({0, 0}, {0, 0});
    case 2: return ThetaCharacteristic::from_rows({1, 0}, {0, 0});
    case 3: return ThetaCharacteristic::from_rows({1, 1}, {0, 0});
    case 4: return ThetaCharacteristic::from_rows({0, 1}, {1, 0});
    case 5: return ThetaCharacteristic::from_rows({0, 1}, {1, 1});
    case 6: return ThetaCharacteristic::from_rows({0, 1}, {0, 1});
    default: throw std::invalid_argument("branch index must lie in 1..6");
  }
}

/// Sum mod 2 of branch-point characteristics: [35] = char_from_points({3, 5}).
inline ThetaCharacteristic char_from_points(std::initializer_list<int> indices) {
  ThetaCharacteristic c;
  for (int s : indices) c = c + branch_characteristic(s);
  return c;
}

/// All sixteen integer characteristics.
inline std::array<ThetaCharacteristic, 16> all_integer_characteristics() {
  std::array<ThetaCharacteristic, 16> out;
  for (int k = 0; k < 16; ++k)
    out[k] = ThetaCharacteristic::from_rows({k & 1, (k >> 1) & 1}, {(k >> 2) & 1, (k >> 3) & 1});
  return out;
}

/// The point 1/2 (Pi e + e') of C^2 represented by a characteristic.
template <class S>
Vec2<S> characteristic_point(const ThetaCharacteristic& c, const SymMat2<S>& pi) {
  const Vec2d e{2.0 * c.eps[0], 2.0 * c.eps[1]};
  const Vec2d ep{2.0 * c.eps_prime[0], 2.0 * c.eps_prime[1]};
  return {0.5 * (pi.a11 * e[0] + pi.a12 * e[1]) + cplx(0.5 * ep[0]),
          0.5 * (pi.a12 * e[0] + pi.a22 * e[1]) + cplx(0.5 * ep[1])};
}

/// Truncation radius around the envelope center for the given tolerance.
inline int truncation_radius(const SymMat2d& omega, const SeriesControl& ctl) {
  const double lam = min_eigenvalue(omega);
  if (!(lam > 0.0)) throw std::invalid_argument("theta: Im Pi is not positive definite");
  const int radius =
      static_cast<int>(std::ceil(std::sqrt(-std::log(ctl.target_tol) / (std::numbers::pi * lam)))) + 2;
  if (radius > ctl.max_radius) {
    std::ostringstream os;
    os << "theta: tolerance " << ctl.target_tol << " needs radius " << radius
       << " > max_radius " << ctl.max_radius;
    throw SeriesError(os.str());
  }
  return radius;
}

template <class S>
struct ThetaValue {
  S value{};
  Vec2<S> grad{};
};

namespace detail {

// Kahan-compensated accumulator over any additive scalar type.
template <class S>
struct CompensatedSum {
  S sum{};
  S comp{};
  void add(const S& x) {
    const S y = x - comp;
    const S t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  S result() const { return sum; }
};

inline SymMat2d omega_of(const SymMat2<cplx>& pi) { return {pi.a11.imag(), pi.a12.imag(), pi.a22.imag()}; }

template <int N>
SymMat2d omega_of(const SymMat2<Jet<N>>& pi) {
  return {pi.a11.v.imag(), pi.a12.v.imag(), pi.a22.v.imag()};
}

}  // namespace detail

/// Core series: theta[c](u, Pi) and optionally its u-gradient.
template <class S>
ThetaValue<S> theta_series(const ThetaCharacteristic& c, const Vec2<S>& u, const SymMat2<S>& pi,
                           const SeriesControl& ctl, bool with_grad) {
  using std::exp;
  constexpr double kPi = std::numbers::pi;
  const cplx two_pi_i(0.0, 2.0 * kPi);
  const cplx pi_i(0.0, kPi);

  const SymMat2d om = detail::omega_of(pi);
  const int radius = truncation_radius(om, ctl);

  // Envelope center n* = -Omega^{-1} Im(u); sweep m around round(n* - e).
  const double iu0 = value_of(u[0]).imag();
  const double iu1 = value_of(u[1]).imag();
  const double det = om.a11 * om.a22 - om.a12 * om.a12;
  const double c0 = -(om.a22 * iu0 - om.a12 * iu1) / det;
  const double c1 = -(-om.a12 * iu0 + om.a11 * iu1) / det;
  const int m0 = static_cast<int>(std::lround(c0 - c.eps[0]));
  const int m1 = static_cast<int>(std::lround(c1 - c.eps[1]));

  const S w0 = u[0] + cplx(c.eps_prime[0]);
  const S w1 = u[1] + cplx(c.eps_prime[1]);

  detail::CompensatedSum<S> val, g0, g1;
  for (int i = m0 - radius; i <= m0 + radius; ++i) {
    const double n0 = i + c.eps[0];
    for (int j = m1 - radius; j <= m1 + radius; ++j) {
      const double n1 = j + c.eps[1];
      const S expo = two_pi_i * (n0 * w0 + n1 * w1) +
                     pi_i * (n0 * n0 * pi.a11 + 2.0 * n0 * n1 * pi.a12 + n1 * n1 * pi.a22);
      const S term = exp(expo);
      val.add(term);
      if (with_grad) {
        g0.add(two_pi_i * n0 * term);
        g1.add(two_pi_i * n1 * term);
      }
    }
  }
  return {val.result(), {g0.result(), g1.result()}};
}

/// theta(u, Pi).
inline cplx theta(const Vec2c& u, const RiemannMatrix& pi, const SeriesControl& ctl = {}) {
  return theta_series<cplx>(ThetaCharacteristic{}, u, pi.pi(), ctl, false).value;
}

/// theta[c](u, Pi), summed directly over the shifted lattice.
inline cplx theta_char(const ThetaCharacteristic& c, const Vec2c& u, const RiemannMatrix& pi,
                       const SeriesControl& ctl = {}) {
  return theta_series<cplx>(c, u, pi.pi(), ctl, false).value;
}

/// theta[c](u, Pi) through the prefactor identity
///   exp(i pi e.Pi.e + 2 i pi e.(u + e')) theta(u + Pi e + e').
inline cplx theta_char_shifted(const ThetaCharacteristic& c, const Vec2c& u, const RiemannMatrix& pi,
                               const SeriesControl& ctl = {}) {
  const auto& p = pi.pi();
  const auto& e = c.eps;
  const auto& ep = c.eps_prime;
  const Vec2c pe{p.a11 * e[0] + p.a12 * e[1], p.a12 * e[0] + p.a22 * e[1]};
  const cplx i(0.0, 1.0);
  constexpr double kPi = std::numbers::pi;
  const cplx pref = std::exp(i * kPi * (e[0] * pe[0] + e[1] * pe[1]) +
                             2.0 * i * kPi * (e[0] * (u[0] + ep[0]) + e[1] * (u[1] + ep[1])));
  return pref * theta({u[0] + pe[0] + ep[0], u[1] + pe[1] + ep[1]}, pi, ctl);
}

/// Gradient of theta[c] with respect to u.
inline Vec2c theta_grad(const ThetaCharacteristic& c, const Vec2c& u, const RiemannMatrix& pi,
                        const SeriesControl& ctl = {}) {
  return theta_series<cplx>(c, u, pi.pi(), ctl, true).grad;
}

}  // namespace damflow
