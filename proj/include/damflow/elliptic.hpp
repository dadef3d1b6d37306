#pragma once

// Elliptic-integral machinery for the rectangle stage: Carlson's R_F with
// complex arguments, the arithmetic-geometric mean, F(1/2, 1/2; 1; z) by
// three routes, and Jacobi sn at complex argument.

#include <boost/math/special_functions/jacobi_elliptic.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

#include "damflow/jet.hpp"

namespace damflow {

/// Carlson R_F(x, y, z) by duplication. Arguments may be complex; values on
/// the negative real axis are read as limits from the upper half-plane when
/// their imaginary part is +0. At most one argument may vanish.
inline cplx carlson_rf(cplx x, cplx y, cplx z) {
  const int zeros = (x == 0.0) + (y == 0.0) + (z == 0.0);
  if (zeros > 1) throw std::domain_error("carlson_rf: more than one zero argument");
  for (int iter = 0; iter < 200; ++iter) {
    const cplx sx = std::sqrt(x), sy = std::sqrt(y), sz = std::sqrt(z);
    const cplx lam = sx * sy + sx * sz + sy * sz;
    x = 0.25 * (x + lam);
    y = 0.25 * (y + lam);
    z = 0.25 * (z + lam);
    const cplx mu = (x + y + z) / 3.0;
    const double dev = std::max({std::abs(1.0 - x / mu), std::abs(1.0 - y / mu), std::abs(1.0 - z / mu)});
    if (dev < 1e-3) {
      const cplx dx = 1.0 - x / mu, dy = 1.0 - y / mu, dz = 1.0 - z / mu;
      const cplx e2 = dx * dy - dz * dz;
      const cplx e3 = dx * dy * dz;
      return (1.0 + e2 * (-0.1 + e2 / 24.0 - 3.0 * e3 / 44.0) + e3 / 14.0) / std::sqrt(mu);
    }
  }
  throw std::runtime_error("carlson_rf: no convergence");
}

/// Arithmetic-geometric mean of two positive reals.
inline double agm(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::domain_error("agm: arguments must be positive");
  for (int iter = 0; iter < 100; ++iter) {
    const double an = 0.5 * (a + b);
    const double bn = std::sqrt(a * b);
    if (std::abs(an - bn) <= 1e-16 * an) return 0.5 * (an + bn);
    a = an;
    b = bn;
  }
  return 0.5 * (a + b);
}

/// Complete elliptic integral K(m) with parameter m = k^2 < 1, by AGM.
inline double complete_k_agm(double m) {
  if (!(m < 1.0)) throw std::domain_error("complete_k_agm: need m < 1");
  return std::numbers::pi / (2.0 * agm(1.0, std::sqrt(1.0 - m)));
}

/// Complete elliptic integral K(m) via Carlson: K(m) = R_F(0, 1 - m, 1).
inline double complete_k_carlson(double m) {
  if (!(m < 1.0)) throw std::domain_error("complete_k_carlson: need m < 1");
  return carlson_rf(0.0, 1.0 - m, 1.0).real();
}

/// F(1/2, 1/2; 1; z) for real z < 1 through the elliptic identity
/// F = (2 / pi) K(z).
inline double hyp2f1_half_carlson(double z) { return 2.0 / std::numbers::pi * complete_k_carlson(z); }

/// Same function through the AGM: F = 1 / AGM(1, sqrt(1 - z)).
inline double hyp2f1_half_agm(double z) {
  if (!(z < 1.0)) throw std::domain_error("hyp2f1_half_agm: need z < 1");
  return 1.0 / agm(1.0, std::sqrt(1.0 - z));
}

/// Raw power series, |z| < 1 only. Kept as a slow reference route.
inline double hyp2f1_half_series(double z, double tol = 1e-16, int max_terms = 2000000) {
  if (!(std::abs(z) < 1.0)) throw std::domain_error("hyp2f1_half_series: need |z| < 1");
  double term = 1.0, sum = 1.0;
  for (int n = 0; n < max_terms; ++n) {
    const double r = (n + 0.5) / (n + 1.0);
    term *= r * r * z;
    sum += term;
    if (std::abs(term) < tol * std::abs(sum) && n > 4) return sum;
  }
  throw std::runtime_error("hyp2f1_half_series: too many terms");
}

/// Jacobi sn(u, k) for complex u and real modulus 0 < k < 1, from real
/// Jacobi functions through the addition theorem and Jacobi's imaginary
/// transformation.
inline cplx jacobi_sn(cplx u, double k) {
  if (!(k > 0.0 && k < 1.0)) throw std::domain_error("jacobi_sn: need 0 < k < 1");
  const double kp = std::sqrt((1.0 - k) * (1.0 + k));
  // dn is rebuilt from sn: the library value degrades where cn vanishes.
  double c, d;
  const double s = boost::math::jacobi_elliptic(k, u.real(), &c, &d);
  d = std::sqrt(1.0 - k * k * s * s);
  double c1, d1;
  const double s1 = boost::math::jacobi_elliptic(kp, u.imag(), &c1, &d1);
  d1 = std::sqrt(1.0 - kp * kp * s1 * s1);
  const double den = c1 * c1 + k * k * s * s * s1 * s1;
  return cplx(s * d1, c * d * s1 * c1) / den;
}

}  // namespace damflow
