#pragma once

// Physical outputs of a solved mapping: the modulus lambda = x(p6), the
// rectangle of the complex potential, and flow lines traced back into the
// octagon.

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "damflow/rect.hpp"
#include "damflow/sc_map.hpp"

namespace damflow {

/// lambda = Const theta^2[356](u+) / theta^2[356](u-), where Const is the
/// value at p1 of theta^2[135](u-) / theta^2[135](u+). Both [135] factors
/// vanish (they coincide with theta[35] at the divisor points u+-), so the
/// quotient is taken as its limit along the curve at u = 0.
inline double lambda_modulus(const MappingParams& mp, const SeriesControl& ctl = {1e-15, 40}) {
  mp.validate();
  const RiemannMatrix pi = mp.riemann();
  const Vec2c up{cplx(mp.u_plus[0]), cplx(mp.u_plus[1])};
  const Vec2c um{cplx(mp.u_minus[0]), cplx(mp.u_minus[1])};
  const ThetaCharacteristic c135 = char_from_points({1, 3, 5});
  const ThetaCharacteristic c356 = char_from_points({3, 5, 6});
  const Vec2c g0 = theta_grad(c135, {0.0, 0.0}, pi, ctl);
  const Vec2c v{g0[1], -g0[0]};
  auto along = [&](const Vec2c& a) {
    const Vec2c g = theta_grad(c135, a, pi, ctl);
    return g[0] * v[0] + g[1] * v[1];
  };
  const cplx lim = along(um) / along(up);
  const cplx q = theta_char(c356, up, pi, ctl) / theta_char(c356, um, pi, ctl);
  const cplx lam = lim * lim * q * q;
  if (!(std::abs(lam.imag()) <= 1e-8 * std::abs(lam)) || !(lam.real() > 1.0))
    throw SolverError("lambda_modulus: lambda = " + std::to_string(lam.real()) + " is not above 1; parameters inconsistent");
  return lam.real();
}

/// Rectangle of a solved mapping.
inline RectModel rect_model(const MappingParams& mp) { return RectModel::from_lambda(lambda_modulus(mp)); }

/// Sampled flow line: rectangle points f and their images w in the octagon.
/// When a sample fails the polyline stops there and `error` says why.
struct Polyline {
  std::vector<cplx> f;
  std::vector<cplx> w;
  std::string error;

  bool complete() const { return error.empty(); }
};

namespace detail {

// Chebyshev-Lobatto nodes on [0, 1].
inline std::vector<double> chebyshev_nodes(int n) {
  std::vector<double> s(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) s[static_cast<std::size_t>(k)] = 0.5 * (1.0 - std::cos(std::numbers::pi * k / (n - 1)));
  return s;
}

inline Polyline trace(const ScMap& map, const RectModel& rm, const std::vector<cplx>& fs) {
  Polyline out;
  for (const cplx f : fs) {
    try {
      const cplx w = map.map_x_to_w(rect_inverse(f, rm.lambda));
      out.f.push_back(f);
      out.w.push_back(w);
    } catch (const std::exception& e) {
      out.error = "sample f = (" + std::to_string(f.real()) + ", " + std::to_string(f.imag()) + "): " + e.what();
      break;
    }
  }
  return out;
}

inline void check_line_args(double frac, int n, const char* what) {
  if (!(frac >= 0.0 && frac <= 1.0)) throw std::invalid_argument(std::string(what) + ": fraction must lie in [0, 1]");
  if (n < 2) throw std::invalid_argument(std::string(what) + ": need at least two samples");
}

}  // namespace detail

/// Streamline Im f = q_frac kappa, sampled at n Chebyshev points in Re f.
inline Polyline trace_streamline(double q_frac, int n, const ScMap& map, const RectModel& rm) {
  detail::check_line_args(q_frac, n, "trace_streamline");
  rm.validate();
  std::vector<cplx> fs;
  for (double s : detail::chebyshev_nodes(n)) fs.emplace_back(s, q_frac * rm.kappa);
  return detail::trace(map, rm, fs);
}

/// Equipotential Re f = p_frac, sampled at n Chebyshev points in Im f.
inline Polyline trace_equipotential(double p_frac, int n, const ScMap& map, const RectModel& rm) {
  detail::check_line_args(p_frac, n, "trace_equipotential");
  rm.validate();
  std::vector<cplx> fs;
  for (double s : detail::chebyshev_nodes(n)) fs.emplace_back(p_frac, s * rm.kappa);
  return detail::trace(map, rm, fs);
}

inline Polyline trace_streamline(double q_frac, int n, const ScMap& map) {
  return trace_streamline(q_frac, n, map, rect_model(map.params()));
}

inline Polyline trace_equipotential(double p_frac, int n, const ScMap& map) {
  return trace_equipotential(p_frac, n, map, rect_model(map.params()));
}

}  // namespace damflow
