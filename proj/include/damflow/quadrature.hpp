#pragma once

// Quadrature rules for integrands with inverse square-root endpoint
// singularities, plus an adaptive Gauss-Kronrod wrapper for smooth legs.

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

#include "damflow/jet.hpp"

namespace damflow {

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Integral of g(x) / sqrt((x - a)(b - x)) over [a, b] by Gauss-Chebyshev
/// rules of increasing size; g must be smooth on [a, b].
template <class G>
cplx chebyshev_integral(G&& g, double a, double b, double rel_tol = 1e-13, int max_nodes = 1 << 14) {
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  auto rule = [&](int n) {
    cplx s = 0.0;
    for (int k = 0; k < n; ++k) s += g(mid + half * std::cos((2.0 * k + 1.0) * std::numbers::pi / (2.0 * n)));
    return s * (std::numbers::pi / n);
  };
  cplx prev = rule(16);
  for (int n = 32; n <= max_nodes; n *= 2) {
    const cplx cur = rule(n);
    if (std::abs(cur - prev) <= rel_tol * std::max(std::abs(cur), 1e-300)) return cur;
    prev = cur;
  }
  throw QuadratureError("chebyshev_integral: no convergence");
}

/// Adaptive Gauss-Kronrod (15 points) of a complex integrand over [a, b].
template <class F>
cplx adaptive_integral(F&& f, double a, double b, double rel_tol = 1e-13, unsigned max_depth = 12) {
  double err = 0.0;
  double l1 = 0.0;
  const cplx r = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
      [&](double t) { return cplx(f(t)); }, a, b, max_depth, rel_tol, &err, &l1);
  if (!std::isfinite(r.real()) || !std::isfinite(r.imag()))
    throw QuadratureError("adaptive_integral: non-finite result");
  if (err > std::max(1e4 * rel_tol, 1e-8) * l1) throw QuadratureError("adaptive_integral: no convergence");
  return r;
}

// The helpers below call the integrand as f(anchor, offset) with the
// evaluation point anchor + offset. Integrands that are singular at a branch
// point evaluate distances as (anchor - branch) + offset, which stays exact
// when the anchor is the branch point itself.

/// Integral over [a, b] of f where f behaves like (x - a)^(-1/2) at a.
/// Uses x = a + (b - a) s^2.
template <class F>
cplx sqrt_left_integral(F&& f, double a, double b, double rel_tol = 1e-13) {
  const double len = b - a;
  if (len == 0.0) return 0.0;
  return adaptive_integral([&](double s) { return f(cplx(a), cplx(len * s * s)) * (2.0 * len * s); }, 0.0, 1.0,
                           rel_tol);
}

/// Integral over [a, b] of f where f behaves like (b - x)^(-1/2) at b.
template <class F>
cplx sqrt_right_integral(F&& f, double a, double b, double rel_tol = 1e-13) {
  const double len = b - a;
  if (len == 0.0) return 0.0;
  return adaptive_integral([&](double s) { return f(cplx(b), cplx(-len * s * s)) * (2.0 * len * s); }, 0.0, 1.0,
                           rel_tol);
}

/// Integral of f along the segment from z0 to z1, with f allowed a
/// square-root singularity at z0 (z = z0 + (z1 - z0) s^2).
template <class F>
cplx segment_integral_from_singular(F&& f, cplx z0, cplx z1, double rel_tol = 1e-13) {
  const cplx d = z1 - z0;
  if (std::abs(d) == 0.0) return 0.0;
  return adaptive_integral([&](double s) { return f(z0, d * (s * s)) * (2.0 * s) * d; }, 0.0, 1.0, rel_tol);
}

/// Integral of f along a straight segment with a smooth integrand.
template <class F>
cplx segment_integral(F&& f, cplx z0, cplx z1, double rel_tol = 1e-13) {
  const cplx d = z1 - z0;
  if (std::abs(d) == 0.0) return 0.0;
  return adaptive_integral([&](double s) { return f(z0, d * s) * d; }, 0.0, 1.0, rel_tol);
}

/// Integral from a real point `base` (square-root branch point allowed) to
/// `z` in the closed upper half-plane along the path
///   base -> base + iL -> Re z + iL -> z,  L = max(height, Im z).
/// The last leg is parameterized from z so a branch point at z is harmless.
template <class F>
cplx upper_path_integral(F&& f, double base, cplx z, double height, double rel_tol = 1e-13) {
  const double level = std::max(height, z.imag());
  const cplx top_left(base, level);
  const cplx top_right(z.real(), level);
  cplx total = segment_integral_from_singular(f, cplx(base, 0.0), top_left, rel_tol);
  total += segment_integral(f, top_left, top_right, rel_tol);
  total -= segment_integral_from_singular(f, z, top_right, rel_tol);
  return total;
}

}  // namespace damflow
