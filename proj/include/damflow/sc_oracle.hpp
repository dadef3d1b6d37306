#pragma once

// Classical Schwarz-Christoffel route by direct quadrature of
//   dw = -A (t - x2)(t - x4)(t - x5) dt / (t y+(t)),   y+^2 = prod (t - x_s),
// with x+ = 0, x1 = 1, x- = oo. Validation infrastructure: accurate at desk
// scale, not robust against crowding. Moving the three zeros off x2, x4, x5
// gives the polygon with cuts.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>

#include "damflow/newton.hpp"
#include "damflow/polygon.hpp"
#include "damflow/quadrature.hpp"

namespace damflow {

struct OracleUnknowns {
  std::array<double, 5> x{2.0, 3.0, 4.0, 5.0, 6.0};  // x2..x6
  double A = 1.0;
  std::optional<std::array<double, 3>> zeros;  // zeros of dw; x2, x4, x5 when empty

  void validate() const {
    double prev = 1.0;
    for (double v : x) {
      if (!std::isfinite(v) || !(v > prev)) throw std::invalid_argument("OracleUnknowns: need 1 < x2 < ... < x6");
      prev = v;
    }
    if (!(A > 0.0) || !std::isfinite(A)) throw std::invalid_argument("OracleUnknowns: A must be positive");
    if (zeros)
      for (double z : *zeros)
        if (!(z > 0.0) || !std::isfinite(z)) throw std::invalid_argument("OracleUnknowns: zeros must be positive");
  }

  std::array<double, 3> zero_points() const { return zeros ? *zeros : std::array<double, 3>{x[0], x[2], x[3]}; }

  /// All six branch points, x1 = 1 first.
  std::array<double, 6> branch_points() const { return {1.0, x[0], x[1], x[2], x[3], x[4]}; }
};

namespace detail {

// dw/dt at anchor + offset on the upper sheet; distances to branch points
// are formed as (anchor - x_s) + offset.
inline cplx sc_density(const OracleUnknowns& u, cplx anchor, cplx offset) {
  const auto xs = u.branch_points();
  cplx y = 1.0;
  for (double s : xs) y *= std::sqrt((anchor - s) + offset);
  const cplx t = anchor + offset;
  const auto z = u.zero_points();
  const cplx num = ((anchor - z[0]) + offset) * ((anchor - z[1]) + offset) * ((anchor - z[2]) + offset);
  return -u.A * num / (t * y);
}

}  // namespace detail

/// Width of the right channel from the residue of dw at x+ = 0.
inline double oracle_width_plus(const OracleUnknowns& u) {
  const auto xs = u.branch_points();
  double prod = 1.0;
  for (double s : xs) prod *= s;
  const auto z = u.zero_points();
  return std::numbers::pi * u.A * z[0] * z[1] * z[2] / std::sqrt(prod);
}

/// Width of the left channel; dw ~ -A dt / t at infinity.
inline double oracle_width_minus(const OracleUnknowns& u) { return std::numbers::pi * u.A; }

/// Signed side length H_s, s = 1..5, as int_{x_s}^{x_{s+1}} dw / i^s by
/// Gauss-Chebyshev quadrature.
inline double oracle_side(const OracleUnknowns& u, int s, double rel_tol = 1e-14, int max_nodes = 1 << 16) {
  const auto xs = u.branch_points();
  const int k = s - 1;
  const double a = xs[k], b = xs[k + 1];
  const auto z = u.zero_points();
  // On (a, b): y+ = i sqrt((t - a)(b - t)) prod_{others} sqrt(t - x_r).
  auto g = [&](double t) {
    cplx r(0.0, 1.0);
    for (int q = 0; q < 6; ++q)
      if (q != k && q != k + 1) r *= std::sqrt(cplx(t - xs[q], 0.0));
    const double num = (t - z[0]) * (t - z[1]) * (t - z[2]);
    return cplx(-u.A * num) / (t * r);
  };
  const cplx integral = chebyshev_integral(g, a, b, rel_tol, max_nodes);
  return (integral / std::pow(cplx(0.0, 1.0), s)).real();
}

/// The seven lengths (H1..H5, H+, H-) of the polygon with these preimages.
inline PolygonSpec sc_side_lengths(const OracleUnknowns& u) {
  u.validate();
  PolygonSpec p;
  for (int s = 1; s <= 5; ++s) p.H[s - 1] = oracle_side(u, s);
  p.h_plus = oracle_width_plus(u);
  p.h_minus = oracle_width_minus(u);
  return p;
}

/// int dw over the upper semicircle |t| = r from -r to r (0 < r < 1). Its
/// imaginary part is the jump across the right channel.
inline cplx oracle_channel_crossing(const OracleUnknowns& u, double r) {
  if (!(r > 0.0 && r < 1.0)) throw std::invalid_argument("oracle_channel_crossing: need 0 < r < 1");
  auto f = [&](double phi) {
    const cplx t = std::polar(r, phi);
    return detail::sc_density(u, t, 0.0) * cplx(0.0, 1.0) * t;
  };
  return -adaptive_integral(f, 0.0, std::numbers::pi, 1e-13);
}

/// w(x) = int_{x1}^{x} dw for x in the closed upper half-plane.
inline cplx oracle_w(const OracleUnknowns& u, cplx x, double rel_tol = 1e-12) {
  if (x.imag() < 0.0) throw std::invalid_argument("oracle_w: x must lie in the closed upper half-plane");
  if (x == 0.0) throw std::domain_error("oracle_w: x+ is a pole");
  const double height = 0.5 * (u.x[4] - 1.0);
  return upper_path_integral([&](cplx a, cplx d) { return detail::sc_density(u, a, d); }, 1.0, x, height, rel_tol);
}

struct OracleReport {
  OracleUnknowns unknowns;
  bool converged = false;
  double residual = 0.0;  // relative max-norm mismatch of the six matched lengths
  int newton_steps = 0;
  int continuation_steps = 0;
  std::string message;
};

namespace detail {

inline Eigen::VectorXd oracle_chart(const OracleUnknowns& u) {
  Eigen::VectorXd z(6);
  double prev = 1.0;
  for (int k = 0; k < 5; ++k) {
    z[k] = std::log(u.x[k] - prev);
    prev = u.x[k];
  }
  z[5] = std::log(u.A);
  return z;
}

inline OracleUnknowns oracle_unchart(const Eigen::VectorXd& z) {
  OracleUnknowns u;
  double prev = 1.0;
  for (int k = 0; k < 5; ++k) {
    prev += std::exp(z[k]);
    u.x[k] = prev;
  }
  u.A = std::exp(z[5]);
  return u;
}

inline Eigen::VectorXd oracle_mismatch(const Eigen::VectorXd& z, const PolygonSpec& target) {
  const OracleUnknowns u = oracle_unchart(z);
  const PolygonSpec p = sc_side_lengths(u);
  Eigen::VectorXd r(6);
  for (int s = 0; s < 5; ++s) r[s] = (p.H[s] - target.H[s]) / target.h_minus;
  r[5] = (p.h_plus - target.h_plus) / target.h_minus;
  return r;
}

}  // namespace detail

/// Solve the parameter problem for `spec` by damped Newton in log-gap
/// variables, continuing linearly from the polygon of `init`.
inline OracleReport oracle_solve_report(const PolygonSpec& spec, const OracleUnknowns& init = {},
                                        double tol = 1e-8, int max_continuation = 200) {
  spec.validate();
  init.validate();
  OracleReport rep;
  rep.unknowns = init;
  // A is fixed by H- exactly; start from that value.
  OracleUnknowns start = init;
  start.A = spec.h_minus / std::numbers::pi;
  const PolygonSpec from = sc_side_lengths(start);
  Eigen::VectorXd z = detail::oracle_chart(start);

  NewtonOptions opt;
  opt.tol = 1e-3 * tol;
  opt.max_iter = 30;
  opt.max_step = 2.0;
  auto admissible = [](const Eigen::VectorXd& v) { return v.allFinite() && v.cwiseAbs().maxCoeff() < 40.0; };

  double t = 0.0, dt = 1.0;
  while (t < 1.0) {
    if (rep.continuation_steps >= max_continuation || dt < 1e-6) {
      rep.message = "continuation stalled at t = " + std::to_string(t);
      rep.unknowns = detail::oracle_unchart(z);
      return rep;
    }
    ++rep.continuation_steps;
    const double tn = std::min(1.0, t + dt);
    const PolygonSpec target = PolygonSpec::lerp(from, spec, tn);
    auto eval = [&](const Eigen::VectorXd& v, Eigen::MatrixXd* jac) {
      auto f = [&](const Eigen::VectorXd& w) { return detail::oracle_mismatch(w, target); };
      if (jac) *jac = fd_jacobian(f, v, 1e-7);
      return f(v);
    };
    NewtonResult nr;
    try {
      nr = damped_newton(eval, z, opt, admissible);
    } catch (const std::exception&) {
      nr.converged = false;
    }
    rep.newton_steps += nr.iterations;
    if (nr.converged) {
      z = nr.x;
      t = tn;
      dt = std::min(1.0, 2.0 * dt);
    } else {
      dt *= 0.5;
    }
  }
  rep.unknowns = detail::oracle_unchart(z);
  const Eigen::VectorXd r = detail::oracle_mismatch(z, spec);
  rep.residual = r.cwiseAbs().maxCoeff();
  rep.converged = rep.residual <= tol;
  rep.message = rep.converged ? "converged" : "final residual above tolerance";
  return rep;
}

/// As oracle_solve_report, throwing SolverError on failure.
inline OracleUnknowns oracle_solve(const PolygonSpec& spec, const OracleUnknowns& init = {}, double tol = 1e-8) {
  const OracleReport rep = oracle_solve_report(spec, init, tol);
  if (!rep.converged) {
    std::ostringstream os;
    os << "oracle_solve: " << rep.message << " (residual " << rep.residual << ")";
    throw SolverError(os.str());
  }
  return rep.unknowns;
}

}  // namespace damflow
