#pragma once

// Auxiliary parameters (Omega, u+, u-, C1, C2) of a polygon.
//
// Nine real equations:
//   wedge   d theta[35] ^ dw = 0 at the half-periods of p2, p4, p5
//   divisor theta[35](u+) = theta[35](u-) = 0
//   periods -2 H2 = C1, 2 H4 = C2,
//           -2 H1 = 2 H- (2 u1- - 1) - 2 H+ (2 u1+ - 1) + C1 Omega11 + C2 Omega12,
//            2 H5 = 4 H- u2- - 4 H+ u2+ + C1 Omega12 + C2 Omega22.
// C is eliminated from the first two period rows; Newton runs on the
// remaining seven unknowns with Jacobians from forward-mode dual numbers.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "damflow/curve.hpp"
#include "damflow/newton.hpp"
#include "damflow/sc_map.hpp"
#include "damflow/sc_oracle.hpp"
#include "damflow/theta.hpp"

namespace damflow {

struct SolverConfig {
  double tol = 1e-10;
  int max_newton = 30;
  int continuation_steps = 4;
  int max_backtracks = 20;
  double isthmus_guard = 0.05;  // refuse specs with H+ + H1 - H3 < guard * H+
  SeriesControl series{1e-15, 40};

  void validate() const {
    if (!(tol > 0.0)) throw std::invalid_argument("SolverConfig: tol must be positive");
    if (max_newton < 1 || continuation_steps < 1 || max_backtracks < 1)
      throw std::invalid_argument("SolverConfig: iteration limits must be at least 1");
    if (!(isthmus_guard >= 0.0 && isthmus_guard < 1.0))
      throw std::invalid_argument("SolverConfig: isthmus_guard must lie in [0, 1)");
    series.validate();
  }
};

/// Residual entries in the order wedge p2, p4, p5; divisor u+, u-;
/// period rows C1, C2, H1, H5.
struct ResidualVector {
  std::array<double, 9> r{};

  static constexpr std::array<const char*, 9> names{"wedge_p2", "wedge_p4", "wedge_p5", "divisor_plus", "divisor_minus",
                                                    "period_c1", "period_c2", "period_h1", "period_h5"};
  double norm() const {
    double s = 0.0;
    for (double v : r) s += v * v;
    return std::sqrt(s);
  }
  double max_abs() const {
    double m = 0.0;
    for (double v : r) m = std::max(m, std::abs(v));
    return m;
  }
};

namespace detail {

template <class S>
Vec2<S> vadd(const Vec2<S>& a, const Vec2<S>& b, double s = 1.0) {
  return {a[0] + s * b[0], a[1] + s * b[1]};
}

// Gradient of the log terms of w: d/du log(theta(a - u) / theta(a + u)).
template <class S>
Vec2<S> log_ratio_grad(const ThetaCharacteristic& c, const Vec2<S>& a, const Vec2<S>& u, const SymMat2<S>& pi,
                       const SeriesControl& ctl) {
  const auto tm = theta_series<S>(c, vadd(a, u, -1.0), pi, ctl, true);
  const auto tp = theta_series<S>(c, vadd(a, u), pi, ctl, true);
  return {S(0.0) - tm.grad[0] / tm.value - tp.grad[0] / tp.value, S(0.0) - tm.grad[1] / tm.value - tp.grad[1] / tp.value};
}

// d theta[35] ^ dw at u, with w built from the odd characteristic `odd`.
template <class S>
S wedge_at(const Vec2<S>& u, const ThetaCharacteristic& odd, const SymMat2<S>& pi, const Vec2<S>& up,
           const Vec2<S>& um, double hp, double hm, const S& c1, const S& c2, const SeriesControl& ctl) {
  const Vec2<S> g = theta_series<S>(char_from_points({3, 5}), u, pi, ctl, true).grad;
  const Vec2<S> lm = log_ratio_grad(odd, um, u, pi, ctl), lp = log_ratio_grad(odd, up, u, pi, ctl);
  const Vec2<S> gw{(hm / std::numbers::pi) * lm[0] - (hp / std::numbers::pi) * lp[0] + c1,
                   (hm / std::numbers::pi) * lm[1] - (hp / std::numbers::pi) * lp[1] + c2};
  return g[0] * gw[1] - g[1] * gw[0];
}

// Odd characteristic used for w near the half-period of p_j.
inline ThetaCharacteristic odd_char_near(int j) { return char_from_points({j == 5 ? 5 : 3}); }

// Rows shared with the cut system: divisor at u+ and u-, period rows H1, H5,
// for p = (O11, O12, O22, u+, u-) and h = (H1..H5, H+, H-); C1 = -2 H2, C2 = 2 H4.
template <class S, std::size_t N>
std::array<S, 4> structure_rows(const std::array<S, N>& p, const std::array<double, 7>& h, const SeriesControl& ctl) {
  const cplx I(0.0, 1.0);
  const SymMat2<S> pi{I * p[0], I * p[1], I * p[2]};
  const double hp = h[5], hm = h[6];
  const double c1 = -2.0 * h[1], c2 = 2.0 * h[3];
  const ThetaCharacteristic c35 = char_from_points({3, 5});
  const S tp = theta_series<S>(c35, Vec2<S>{p[3], p[4]}, pi, ctl, false).value;
  const S tm = theta_series<S>(c35, Vec2<S>{p[5], p[6]}, pi, ctl, false).value;
  return {real_part(tp) + imag_part(tp), real_part(tm) + imag_part(tm),
          S(-2.0 * h[0]) - (2.0 * hm * (2.0 * p[5] - 1.0) - 2.0 * hp * (2.0 * p[3] - 1.0) + c1 * p[0] + c2 * p[1]),
          S(2.0 * h[4]) - (4.0 * hm * p[6] - 4.0 * hp * p[4] + c1 * p[1] + c2 * p[2])};
}

// The seven nonlinear/affine rows in the unknowns p = (O11, O12, O22, u+, u-)
// for side data h = (H1..H5, H+, H-), with C1 = -2 H2, C2 = 2 H4.
template <class S>
std::array<S, 7> core_residual(const std::array<S, 7>& p, const std::array<double, 7>& h, const SeriesControl& ctl) {
  const cplx I(0.0, 1.0);
  const SymMat2<S> pi{I * p[0], I * p[1], I * p[2]};
  const Vec2<S> up{p[3], p[4]}, um{p[5], p[6]};
  const S c1(-2.0 * h[1]), c2(2.0 * h[3]);
  std::array<S, 7> r;
  const std::array<int, 3> points{2, 4, 5};
  for (int k = 0; k < 3; ++k) {
    const Vec2<S> half = characteristic_point<S>(branch_characteristic(points[k]), pi);
    const S wedge = wedge_at(half, odd_char_near(points[k]), pi, up, um, h[5], h[6], c1, c2, ctl);
    r[k] = real_part(wedge) + imag_part(wedge);
  }
  const auto s = structure_rows(p, h, ctl);
  for (int k = 0; k < 4; ++k) r[3 + k] = s[k];
  return r;
}

inline std::array<double, 7> pack(const MappingParams& mp) {
  return {mp.omega.a11, mp.omega.a12, mp.omega.a22, mp.u_plus[0], mp.u_plus[1], mp.u_minus[0], mp.u_minus[1]};
}

inline MappingParams unpack(const Eigen::VectorXd& x, const PolygonSpec& spec) {
  MappingParams mp;
  mp.omega = {x[0], x[1], x[2]};
  mp.u_plus = {x[3], x[4]};
  mp.u_minus = {x[5], x[6]};
  mp.c1 = -2.0 * spec.H[1];
  mp.c2 = 2.0 * spec.H[3];
  mp.polygon = spec;
  return mp;
}

// Residual and exact Jacobian at x for the spec normalized to H- = 1.
inline Eigen::VectorXd core_eval(const Eigen::VectorXd& x, const PolygonSpec& unit, const SeriesControl& ctl,
                                 Eigen::MatrixXd* jac) {
  const auto h = unit.as_vector();
  Eigen::VectorXd r(7);
  if (jac) {
    std::array<Jet<7>, 7> p;
    for (int k = 0; k < 7; ++k) p[k] = Jet<7>::variable(x[k], k);
    const auto rj = core_residual(p, h, ctl);
    jac->resize(7, 7);
    for (int i = 0; i < 7; ++i) {
      r[i] = rj[i].v.real();
      for (int k = 0; k < 7; ++k) (*jac)(i, k) = rj[i].d[k].real();
    }
  } else {
    std::array<cplx, 7> p;
    for (int k = 0; k < 7; ++k) p[k] = x[k];
    const auto rc = core_residual(p, h, ctl);
    for (int i = 0; i < 7; ++i) r[i] = rc[i].real();
  }
  return r;
}

// Trust region of the Newton iterates: positive-definite Omega in the
// slightly inflated cone and the strict ordering of the u-coordinates.
inline bool in_chart(const Eigen::VectorXd& x) {
  if (!x.allFinite()) return false;
  const SymMat2d om{x[0], x[1], x[2]};
  if (!(min_eigenvalue(om) > 0.02)) return false;
  const double m = std::min(x[0], x[2]);
  if (!(x[1] > -0.1 * m && x[1] < 1.1 * m)) return false;
  return x[3] > -0.05 && x[3] < x[5] && x[5] < 0.55;
}

}  // namespace detail

/// Nine residual entries of a parameter candidate for `spec`.
inline ResidualVector residual(const MappingParams& mp, const PolygonSpec& spec, const SeriesControl& ctl = {1e-15, 40}) {
  std::array<cplx, 7> p;
  const auto packed = detail::pack(mp);
  for (int k = 0; k < 7; ++k) p[k] = packed[k];
  const auto rc = detail::core_residual(p, spec.as_vector(), ctl);
  ResidualVector out;
  for (int k = 0; k < 3; ++k) out.r[k] = rc[k].real();
  out.r[3] = rc[3].real();
  out.r[4] = rc[4].real();
  out.r[5] = -2.0 * spec.H[1] - mp.c1;
  out.r[6] = 2.0 * spec.H[3] - mp.c2;
  // The affine rows above used the eliminated C; restore the candidate's own.
  const double dc1 = mp.c1 + 2.0 * spec.H[1], dc2 = mp.c2 - 2.0 * spec.H[3];
  out.r[7] = rc[5].real() - (dc1 * mp.omega.a11 + dc2 * mp.omega.a12);
  out.r[8] = rc[6].real() - (dc1 * mp.omega.a12 + dc2 * mp.omega.a22);
  // Wedge rows depend on C through the gradient of w.
  if (dc1 != 0.0 || dc2 != 0.0) {
    const RiemannMatrix pi = mp.riemann();
    const ThetaCharacteristic c35 = char_from_points({3, 5});
    const std::array<int, 3> points{2, 4, 5};
    for (int k = 0; k < 3; ++k) {
      const Vec2c half = characteristic_point<cplx>(branch_characteristic(points[k]), pi.pi());
      const Vec2c g = theta_grad(c35, half, pi, ctl);
      const cplx extra = g[0] * dc2 - g[1] * dc1;
      out.r[k] += extra.real() + extra.imag();
    }
  }
  return out;
}

struct SolveReport {
  MappingParams params;
  bool converged = false;
  double residual_norm = 0.0;
  int newton_steps = 0;
  int continuation_steps = 0;
  std::string message;
};

/// Forward construction of a solved pair from SC preimages: Omega and u+-
/// from quadrature on the curve, side lengths from the direct SC integral.
inline std::pair<PolygonSpec, MappingParams> anchor_from_unknowns(const OracleUnknowns& ou) {
  ou.validate();
  BranchConfig bc;
  bc.x = ou.branch_points();
  const HyperellipticCurve curve(bc);
  const Vec2c up = curve.abel_jacobi({cplx(0.0, 0.0)}).u;
  const Vec2c um = curve.abel_jacobi({cplx(std::numeric_limits<double>::infinity(), 0.0)}).u;
  const PolygonSpec spec = sc_side_lengths(ou);
  MappingParams mp;
  mp.omega = curve.omega();
  mp.u_plus = {up[0].real(), up[1].real()};
  mp.u_minus = {um[0].real(), um[1].real()};
  mp.c1 = -2.0 * spec.H[1];
  mp.c2 = 2.0 * spec.H[3];
  mp.polygon = spec;
  return {spec, mp};
}

/// Reference polygon with branch points 1..6 and A = 1.
inline std::pair<PolygonSpec, MappingParams> bootstrap_anchor() { return anchor_from_unknowns(OracleUnknowns{}); }

namespace detail {

inline void check_guard(const PolygonSpec& spec, const SolverConfig& cfg) {
  spec.validate();
  if (spec.isthmus_ratio() < cfg.isthmus_guard) {
    std::ostringstream os;
    os << "solve_params: isthmus clearance (H+ + H1 - H3) / H+ = " << spec.isthmus_ratio() << " is below the guard "
       << cfg.isthmus_guard;
    throw SolverError(os.str());
  }
}

// Continuation from a solved (from, start) pair to `to`; accepted steps are
// appended to `path` when it is non-null.
inline SolveReport continue_params(const PolygonSpec& from, const MappingParams& start, const PolygonSpec& to,
                                   const SolverConfig& cfg, double first_step,
                                   std::vector<MappingParams>* path = nullptr) {
  const auto packed = pack(start);
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(packed.data(), 7);
  Eigen::VectorXd x_prev = x;
  double t = 0.0, t_prev = -1.0, dt = std::min(1.0, first_step);
  int backtracks = 0;
  SolveReport rep;
  NewtonOptions opt;
  opt.tol = cfg.tol;
  opt.max_iter = cfg.max_newton;
  opt.max_step = 0.1;
  const std::function<bool(const Eigen::VectorXd&)> chart = in_chart;
  while (true) {
    const double tn = std::min(1.0, t + dt);
    const PolygonSpec mid = PolygonSpec::lerp(from, to, tn);
    const PolygonSpec target = mid.scaled(1.0 / mid.h_minus);
    Eigen::VectorXd guess = x;
    if (t_prev >= 0.0) guess = x + (x - x_prev) * ((tn - t) / (t - t_prev));
    if (!chart(guess)) guess = x;
    auto eval = [&](const Eigen::VectorXd& v, Eigen::MatrixXd* jac) { return core_eval(v, target, cfg.series, jac); };
    NewtonResult nr;
    try {
      nr = damped_newton(eval, guess, opt, chart);
    } catch (const std::exception&) {
      nr.converged = false;
    }
    rep.newton_steps += nr.iterations;
    if (nr.converged) {
      x_prev = x;
      t_prev = t;
      x = nr.x;
      t = tn;
      ++rep.continuation_steps;
      if (path) path->push_back(unpack(x, PolygonSpec::lerp(from, to, t)));
      if (t >= 1.0) break;
      dt = std::min(1.0 - t, 1.5 * dt);
    } else {
      if (++backtracks > cfg.max_backtracks) {
        rep.params = unpack(x, PolygonSpec::lerp(from, to, t));
        rep.message = "continuation exhausted at t = " + std::to_string(t);
        rep.residual_norm = nr.residual_norm;
        return rep;
      }
      dt *= 0.5;
    }
  }
  rep.params = unpack(x, to);
  rep.residual_norm = residual(rep.params, to, cfg.series).norm() / to.h_minus;
  rep.converged = rep.residual_norm <= 10.0 * cfg.tol && rep.params.in_lemma_cone() && rep.params.lemma_ordering();
  rep.message = rep.converged ? "converged" : "solution outside the Lemma constraints or above tolerance";
  return rep;
}

}  // namespace detail

/// Solve with a diagnostic report instead of throwing on non-convergence.
inline SolveReport solve_params_report(const PolygonSpec& spec, const SolverConfig& cfg = {},
                                       const std::optional<MappingParams>& warm_start = std::nullopt) {
  cfg.validate();
  detail::check_guard(spec, cfg);
  if (warm_start) {
    warm_start->validate();
    return detail::continue_params(warm_start->polygon, *warm_start, spec, cfg, 1.0);
  }
  const auto [anchor_spec, anchor_params] = bootstrap_anchor();
  return detail::continue_params(anchor_spec, anchor_params, spec, cfg, 1.0 / cfg.continuation_steps);
}

/// Parameters of `spec`; throws GeometryError for inadmissible specs and
/// SolverError when continuation fails.
inline MappingParams solve_params(const PolygonSpec& spec, const SolverConfig& cfg = {},
                                  const std::optional<MappingParams>& warm_start = std::nullopt) {
  const SolveReport rep = solve_params_report(spec, cfg, warm_start);
  if (!rep.converged) {
    std::ostringstream os;
    os << "solve_params: " << rep.message << " (residual " << rep.residual_norm << ")";
    throw SolverError(os.str());
  }
  return rep.params;
}

/// Parameters along the linear path from `from_spec` to `to_spec`; the last
/// element solves `to_spec`.
inline std::vector<MappingParams> continuation_path(const PolygonSpec& from_spec, const PolygonSpec& to_spec,
                                                    const SolverConfig& cfg = {},
                                                    const std::optional<MappingParams>& from_params = std::nullopt) {
  cfg.validate();
  detail::check_guard(from_spec, cfg);
  detail::check_guard(to_spec, cfg);
  const MappingParams start = from_params ? *from_params : solve_params(from_spec, cfg);
  std::vector<MappingParams> path;
  if (from_spec.as_vector() == to_spec.as_vector()) {
    path.push_back(start);
    return path;
  }
  const SolveReport rep = detail::continue_params(from_spec, start, to_spec, cfg, 1.0 / cfg.continuation_steps, &path);
  if (!rep.converged) throw SolverError("continuation_path: " + rep.message);
  path.back() = rep.params;
  return path;
}

}  // namespace damflow
