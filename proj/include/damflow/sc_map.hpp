#pragma once

// Schwarz-Christoffel map in Jacobian variables.
//
// On the curve image {theta[35](u) = 0} the octagon coordinate is
//   w(u) = (H-/pi) log(th(u- - u) / th(u- + u)) - (H+/pi) log(th(u+ - u) / th(u+ + u))
//          + C1 u1 + C2 u2,
// with th an odd one-point characteristic ([3], or [5] where [3] degenerates),
// and the half-plane coordinate is
//   x(u) = Const th35(u + u+) th35(u - u+) / (th35(u + u-) th35(u - u-)).
// The logarithms are multivalued; points are reached by continuation from a
// vertex with branch-tracked increments, so w is the analytic continuation
// of the integral from p1 through the upper half-plane.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "damflow/newton.hpp"
#include "damflow/polygon.hpp"
#include "damflow/theta.hpp"

namespace damflow {

/// The nine auxiliary reals plus the polygon they belong to.
struct MappingParams {
  SymMat2d omega{1.0, 0.0, 1.0};
  Vec2d u_plus{0.0, 0.0};
  Vec2d u_minus{0.0, 0.0};
  double c1 = 0.0;
  double c2 = 0.0;
  PolygonSpec polygon;

  RiemannMatrix riemann() const { return RiemannMatrix::from_omega(omega); }

  /// 0 < Omega12 < min(Omega11, Omega22).
  bool in_lemma_cone() const { return omega.a12 > 0.0 && omega.a12 < std::min(omega.a11, omega.a22); }

  /// 0 < u1+ < u1- < 1/2.
  bool lemma_ordering() const { return u_plus[0] > 0.0 && u_plus[0] < u_minus[0] && u_minus[0] < 0.5; }

  void validate() const {
    for (double v : {omega.a11, omega.a12, omega.a22, u_plus[0], u_plus[1], u_minus[0], u_minus[1], c1, c2})
      if (!std::isfinite(v)) throw std::invalid_argument("MappingParams: non-finite entry");
    if (!(min_eigenvalue(omega) > 0.0)) throw std::invalid_argument("MappingParams: Omega is not positive definite");
    polygon.validate();
  }
};

/// Point of C^2 with its characteristic u = Pi e + e'.
struct JacobianPoint {
  Vec2c u{};
  ThetaCharacteristic ch;

  /// (2e, 2e').
  std::array<double, 4> integer_form() const {
    return {2 * ch.eps[0], 2 * ch.eps[1], 2 * ch.eps_prime[0], 2 * ch.eps_prime[1]};
  }

  /// Distance of the characteristic from the block 2e in [-1, 0]^2, 2e' in [0, 1]^2.
  double block_violation() const {
    const auto f = integer_form();
    double v = 0.0;
    for (int k = 0; k < 2; ++k) v = std::max({v, f[k] - 0.0, -1.0 - f[k], f[k + 2] - 1.0, 0.0 - f[k + 2]});
    return v;
  }

  bool in_block(double tol = 1e-9) const { return block_violation() <= tol; }
};

inline JacobianPoint jacobian_point(const Vec2c& u, const SymMat2d& omega) {
  const double det = omega.a11 * omega.a22 - omega.a12 * omega.a12;
  const double i0 = u[0].imag(), i1 = u[1].imag();
  ThetaCharacteristic ch{{(omega.a22 * i0 - omega.a12 * i1) / det, (-omega.a12 * i0 + omega.a11 * i1) / det},
                         {u[0].real(), u[1].real()}};
  return {u, ch};
}

/// Lattice translate of u with every entry of (2e, 2e') in [-1, 1).
inline JacobianPoint reduce_to_fundamental(const Vec2c& u, const SymMat2d& omega) {
  JacobianPoint p = jacobian_point(u, omega);
  const double m0 = std::floor(p.ch.eps[0] + 0.5), m1 = std::floor(p.ch.eps[1] + 0.5);
  const double n0 = std::floor(p.ch.eps_prime[0] + 0.5), n1 = std::floor(p.ch.eps_prime[1] + 0.5);
  const Vec2c r{u[0] - cplx(n0, omega.a11 * m0 + omega.a12 * m1), u[1] - cplx(n1, omega.a12 * m0 + omega.a22 * m1)};
  return jacobian_point(r, omega);
}

struct MapOptions {
  SeriesControl series{1e-15, 40};
  double theta_tol = 1e-12;  // |theta[35](u)| at a solution
  double value_tol = 1e-11;  // relative mismatch of x or w at a solution
  int max_newton = 50;
  int max_path_steps = 4000;
};

class ScMap {
 public:
  explicit ScMap(const MappingParams& mp, const MapOptions& opt = {})
      : mp_(mp), opt_(opt), pi_(mp.riemann()) {
    mp_.validate();
    opt_.series.validate();
    c35_ = char_from_points({3, 5});
    c3_ = char_from_points({3});
    c5_ = char_from_points({5});
    const Vec2c up = real_vec(mp_.u_plus), um = real_vec(mp_.u_minus);
    // Limit value of the quotient at u = 0 along the curve tangent v.
    const Vec2c g0 = grad35({0.0, 0.0});
    const Vec2c v{g0[1], -g0[0]};
    const cplx dm = dot(grad35(um), v), dp = dot(grad35(up), v);
    if (std::abs(dp) == 0.0) throw std::invalid_argument("ScMap: degenerate normalization constant");
    const_ = (dm * dm) / (dp * dp);
    const auto w = mp_.polygon.vertices();
    for (int s = 1; s <= 6; ++s) {
      const ThetaCharacteristic c = branch_characteristic(s);
      vertex_u_[s - 1] = {cplx(c.eps_prime[0], -(mp_.omega.a11 * c.eps[0] + mp_.omega.a12 * c.eps[1])),
                          cplx(c.eps_prime[1], -(mp_.omega.a12 * c.eps[0] + mp_.omega.a22 * c.eps[1]))};
      vertex_w_[s - 1] = w[s - 1];
      branch_x_[s - 1] = s == 1 ? 1.0 : x_of_u(vertex_u_[s - 1]).real();
      init_local_model(s);
    }
    anchor();
  }

  const MappingParams& params() const { return mp_; }
  const RiemannMatrix& riemann() const { return pi_; }
  double x_constant() const { return const_.real(); }

  /// Block representative of the half-period u(p_s), s = 1..6.
  const Vec2c& vertex_u(int s) const { return vertex_u_.at(static_cast<std::size_t>(s - 1)); }
  /// x(p_s).
  double branch_x(int s) const { return branch_x_.at(static_cast<std::size_t>(s - 1)); }
  /// Octagon vertex w_s.
  cplx vertex_w(int s) const { return vertex_w_.at(static_cast<std::size_t>(s - 1)); }

  /// theta[35](u) and its gradient.
  ThetaValue<cplx> theta35(const Vec2c& u) const { return theta_series<cplx>(c35_, u, pi_.pi(), opt_.series, true); }

  /// Formula value of w with principal logarithms (w(0) = 0).
  cplx w_of_u(const Vec2c& u) const {
    const ThetaCharacteristic& c = choose_char(u, u);
    return log_term(c, u) + cplx(mp_.c1) * u[0] + cplx(mp_.c2) * u[1];
  }

  /// Gradient of w at u for the characteristic chosen at u.
  Vec2c w_grad(const Vec2c& u) const { return w_grad(u, choose_char(u, u)); }

  /// w(u1) - w(u0) continued along the short segment between them.
  cplx w_increment(const Vec2c& u0, const Vec2c& u1) const {
    return w_increment(u0, u1, choose_char(u0, u1), nullptr);
  }

  /// Projection to the sphere; infinity at the poles, 1 at u = 0.
  cplx x_of_u(const Vec2c& u) const {
    if (std::abs(u[0]) + std::abs(u[1]) == 0.0) return 1.0;
    const auto q = x_parts(u, false);
    if (q.den == 0.0) return {std::numeric_limits<double>::infinity(), 0.0};
    return q.num / q.den;
  }

  /// Gradient of x(u).
  Vec2c x_grad(const Vec2c& u) const {
    const auto q = x_parts(u, true);
    const cplx x = q.num / q.den;
    return {(q.dnum[0] - x * q.dden[0]) / q.den, (q.dnum[1] - x * q.dden[1]) / q.den};
  }

  /// Solution of theta[35](u) = 0, x(u) = x_star in the block.
  JacobianPoint u_of_x(cplx x_star) const { return track_x(x_star).point; }

  /// Image of x_star (closed upper half-plane, x_star != 0, oo) in the octagon.
  cplx map_x_to_w(cplx x_star) const {
    if (x_star == 0.0 || std::isinf(std::abs(x_star)))
      throw std::domain_error("map_x_to_w: x = 0 and x = oo map to the channel ends");
    return track_x(x_star).w;
  }

  /// Solution of theta[35](u) = 0, w(u) = w_star in the block.
  JacobianPoint u_of_w(cplx w_star) const {
    const PolygonSpec& P = mp_.polygon;
    if (!P.contains(w_star)) throw std::domain_error("u_of_w: point outside the octagon");
    const Anchor& a = anchor();
    const double ys = 0.5 * (P.bed_level() + (P.H[0] - P.H[2]));
    const std::array<cplx, 4> corners{a.w, cplx(a.w.real(), ys), cplx(w_star.real(), ys), w_star};
    Vec2c u = a.u;
    cplx w = a.w;
    for (int leg = 0; leg < 3; ++leg) {
      if (std::abs(corners[leg + 1] - corners[leg]) == 0.0) continue;
      track_w_leg(corners[leg], corners[leg + 1], u, w, leg == 2);
    }
    JacobianPoint p = jacobian_point(u, mp_.omega);
    if (!p.in_block(1e-7)) throw SolverError("u_of_w: solution left the characteristic block");
    return p;
  }

  cplx map_w_to_x(cplx w_star) const { return x_of_u(u_of_w(w_star).u); }

 private:
  struct XParts {
    cplx num, den;
    Vec2c dnum{}, dden{};
  };

  struct Tracked {
    JacobianPoint point;
    cplx w;
  };

  struct Anchor {
    Vec2c u;
    cplx w;
  };

  struct LocalModel {
    Vec2c v{};   // curve tangent at the half-period
    cplx c{};    // x - x_s ~ c s^2 along u = h + v s
  };

  static Vec2c real_vec(const Vec2d& a) { return {cplx(a[0]), cplx(a[1])}; }
  static cplx dot(const Vec2c& a, const Vec2c& b) { return a[0] * b[0] + a[1] * b[1]; }
  static Vec2c add(const Vec2c& a, const Vec2c& b, cplx s = 1.0) { return {a[0] + s * b[0], a[1] + s * b[1]}; }
  static double norm(const Vec2c& a) { return std::hypot(std::abs(a[0]), std::abs(a[1])); }

  ThetaValue<cplx> th(const ThetaCharacteristic& c, const Vec2c& u, bool grad) const {
    return theta_series<cplx>(c, u, pi_.pi(), opt_.series, grad);
  }
  Vec2c grad35(const Vec2c& u) const { return th(c35_, u, true).grad; }

  // Characteristic whose theta factors stay furthest from zero at both u0, u1.
  const ThetaCharacteristic& choose_char(const Vec2c& u0, const Vec2c& u1) const {
    auto smallest = [&](const ThetaCharacteristic& c) {
      double m = std::numeric_limits<double>::infinity();
      for (const Vec2c& u : {u0, u1})
        for (const Vec2d& a : {mp_.u_plus, mp_.u_minus})
          for (double sg : {-1.0, 1.0}) m = std::min(m, std::abs(th(c, add(real_vec(a), u, sg), false).value));
      return m;
    };
    return smallest(c3_) >= smallest(c5_) ? c3_ : c5_;
  }

  cplx log_term(const ThetaCharacteristic& c, const Vec2c& u) const {
    auto l = [&](const Vec2d& a) {
      const Vec2c av = real_vec(a);
      cplx q = th(c, add(av, u, -1.0), false).value / th(c, add(av, u), false).value;
      // At half-periods q is real; on the negative axis take the upper side of the cut.
      if (q.real() < 0.0 && std::abs(q.imag()) <= 1e-12 * std::abs(q)) q = cplx(q.real(), 0.0);
      return std::log(q);
    };
    return mp_.polygon.h_minus / std::numbers::pi * l(mp_.u_minus) - mp_.polygon.h_plus / std::numbers::pi * l(mp_.u_plus);
  }

  Vec2c w_grad(const Vec2c& u, const ThetaCharacteristic& c) const {
    Vec2c g{cplx(mp_.c1), cplx(mp_.c2)};
    auto part = [&](const Vec2d& a, double coef) {
      const Vec2c av = real_vec(a);
      const auto tm = th(c, add(av, u, -1.0), true);
      const auto tp = th(c, add(av, u), true);
      for (int k = 0; k < 2; ++k) g[k] += coef * (-tm.grad[k] / tm.value - tp.grad[k] / tp.value);
    };
    part(mp_.u_minus, mp_.polygon.h_minus / std::numbers::pi);
    part(mp_.u_plus, -mp_.polygon.h_plus / std::numbers::pi);
    return g;
  }

  // Principal-log increment; *max_arg receives the largest factor rotation.
  cplx w_increment(const Vec2c& u0, const Vec2c& u1, const ThetaCharacteristic& c, double* max_arg) const {
    double worst = 0.0;
    auto l = [&](const Vec2d& a) {
      const Vec2c av = real_vec(a);
      const cplx r1 = th(c, add(av, u1, -1.0), false).value / th(c, add(av, u0, -1.0), false).value;
      const cplx r2 = th(c, add(av, u1), false).value / th(c, add(av, u0), false).value;
      const cplx l1 = std::log(r1), l2 = std::log(r2);
      worst = std::max({worst, std::abs(l1.imag()), std::abs(l2.imag())});
      return l1 - l2;
    };
    const cplx d = mp_.polygon.h_minus / std::numbers::pi * l(mp_.u_minus) -
                   mp_.polygon.h_plus / std::numbers::pi * l(mp_.u_plus) + cplx(mp_.c1) * (u1[0] - u0[0]) +
                   cplx(mp_.c2) * (u1[1] - u0[1]);
    if (max_arg) *max_arg = worst;
    return d;
  }

  XParts x_parts(const Vec2c& u, bool grad) const {
    const Vec2c up = real_vec(mp_.u_plus), um = real_vec(mp_.u_minus);
    const auto a = th(c35_, add(u, up), grad), b = th(c35_, add(u, up, -1.0), grad);
    const auto c = th(c35_, add(u, um), grad), d = th(c35_, add(u, um, -1.0), grad);
    XParts q{const_ * a.value * b.value, c.value * d.value};
    if (grad)
      for (int k = 0; k < 2; ++k) {
        q.dnum[k] = const_ * (a.grad[k] * b.value + a.value * b.grad[k]);
        q.dden[k] = c.grad[k] * d.value + c.value * d.grad[k];
      }
    return q;
  }

  // Complex 2x2 damped Newton on F = (theta35(u), G(u)); `eval` returns
  // (F, rows of the Jacobian). Converged when |F0| <= tol0 and |F1| <= tol1.
  template <class Eval>
  std::optional<Vec2c> newton2(Vec2c u, Eval&& eval, double tol0, double tol1, int* iters = nullptr,
                               bool polish = false) const {
    auto [f, jac] = eval(u);
    // Merit in u-units: each row scaled by its gradient length.
    double s0 = 1.0, s1 = 1.0;
    auto rescale = [&] {
      s0 = std::hypot(std::abs(jac[0][0]), std::abs(jac[0][1]));
      s1 = std::hypot(std::abs(jac[1][0]), std::abs(jac[1][1]));
      if (!(s0 > 0.0)) s0 = 1.0;
      if (!(s1 > 0.0)) s1 = 1.0;
    };
    auto measure = [&](const std::array<cplx, 2>& g) { return std::hypot(std::abs(g[0]) / s0, std::abs(g[1]) / s1); };
    rescale();
    double m = measure(f);
    bool done = false;
    for (int it = 0; it < opt_.max_newton; ++it) {
      if (iters) *iters = it;
      const bool small = std::abs(f[0]) <= tol0 && std::abs(f[1]) <= tol1;
      if (small && (!polish || done)) return u;
      const cplx det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
      if (det == 0.0) return small ? std::optional<Vec2c>(u) : std::nullopt;
      const Vec2c du{(-f[0] * jac[1][1] + f[1] * jac[0][1]) / det, (-f[1] * jac[0][0] + f[0] * jac[1][0]) / det};
      if (!std::isfinite(std::abs(du[0])) || !std::isfinite(std::abs(du[1])))
        return small ? std::optional<Vec2c>(u) : std::nullopt;
      if (small) {
        // One extra full step; kept only if it does not increase the residual.
        done = true;
        const Vec2c trial = add(u, du);
        auto [ft, jt] = eval(trial);
        if (measure(ft) <= m) return trial;
        return u;
      }
      double t = 1.0;
      bool ok = false;
      for (int h = 0; h < 12; ++h, t *= 0.5) {
        const Vec2c trial = add(u, du, t);
        auto [ft, jt] = eval(trial);
        const double mt = measure(ft);
        if (std::isfinite(mt) && mt < m) {
          u = trial;
          f = ft;
          jac = jt;
          rescale();
          m = measure(f);
          ok = true;
          break;
        }
      }
      if (!ok) return std::nullopt;
    }
    if (std::abs(f[0]) <= tol0 && std::abs(f[1]) <= tol1) return u;
    return std::nullopt;
  }

  using System = std::pair<std::array<cplx, 2>, std::array<std::array<cplx, 2>, 2>>;

  // theta35 = 0 with x(u) - x (|x| <= 1) or 1/x(u) - 1/x (|x| > 1).
  System x_system(const Vec2c& u, cplx x) const {
    const auto t = theta35(u);
    const auto q = x_parts(u, true);
    System out;
    out.second[0] = {t.grad[0], t.grad[1]};
    if (std::abs(x) <= 1.0) {
      const cplx xv = q.num / q.den;
      out.first = {t.value, xv - x};
      for (int k = 0; k < 2; ++k) out.second[1][k] = (q.dnum[k] - xv * q.dden[k]) / q.den;
    } else {
      const cplx r = q.den / q.num;
      out.first = {t.value, r - 1.0 / x};
      for (int k = 0; k < 2; ++k) out.second[1][k] = (q.dden[k] - r * q.dnum[k]) / q.num;
    }
    return out;
  }

  std::optional<Vec2c> solve_x(const Vec2c& guess, cplx x, int* iters = nullptr, bool final = true) const {
    double tol = final ? 0.1 * opt_.value_tol : kPathTol;
    // In the 1/x form the residual carries rounding of order eps, so x near
    // x- is only determined to relative precision eps |x|.
    if (std::abs(x) > 1.0) tol = std::max(tol / std::abs(x), kReciprocalFloor);
    return newton2(guess, [&](const Vec2c& u) { return x_system(u, x); }, opt_.theta_tol, tol,
                   iters, final);
  }

  // Point on the divisor near h + v s, by Newton along the normal direction.
  Vec2c project(const Vec2c& u0) const {
    Vec2c u = u0;
    for (int it = 0; it < 20; ++it) {
      const auto t = theta35(u);
      const cplx g2 = std::norm(t.grad[0]) + std::norm(t.grad[1]);
      if (std::abs(t.value) <= 1e-15 || g2 == 0.0) break;
      const cplx step = t.value / g2;
      u = {u[0] - step * std::conj(t.grad[0]), u[1] - step * std::conj(t.grad[1])};
    }
    return u;
  }

  void init_local_model(int s) {
    const Vec2c& h = vertex_u_[s - 1];
    const Vec2c g = grad35(h);
    Vec2c v{g[1], -g[0]};
    const double n = norm(v);
    v = {v[0] / n, v[1] / n};
    const double sigma = 1e-3;
    const Vec2c us = project(add(h, v, sigma));
    local_[s - 1] = {v, (x_of_u(us) - branch_x_[s - 1]) / (sigma * sigma)};
  }

  // Start vertex minimizing the logarithmic distance to x.
  int nearest_vertex(cplx x) const {
    int best = 1;
    double bd = std::numeric_limits<double>::infinity();
    for (int s = 1; s <= 6; ++s) {
      const double d = std::abs(std::log(x) - std::log(cplx(branch_x_[s - 1])));
      if (d < bd) {
        bd = d;
        best = s;
      }
    }
    return best;
  }

  Tracked track_x(cplx x_star) const {
    if (!(x_star.imag() >= 0.0) || std::isnan(x_star.real()))
      throw std::domain_error("u_of_x: x must lie in the closed upper half-plane");
    if (std::isinf(std::abs(x_star))) return {jacobian_point(real_vec(mp_.u_minus), mp_.omega), cplx(INFINITY, 0)};
    if (x_star == 0.0) return {jacobian_point(real_vec(mp_.u_plus), mp_.omega), cplx(INFINITY, 0)};
    const int s = nearest_vertex(x_star);
    const double xs = branch_x_[s - 1];
    const Vec2c& h = vertex_u_[s - 1];
    const cplx d = x_star - xs;
    if (std::abs(d) <= 1e-13 * (1.0 + std::abs(xs))) return {jacobian_point(h, mp_.omega), vertex_w_[s - 1]};

    const double span = std::abs(d);
    auto path = [&](double t) { return xs + d * t + cplx(0.0, span * t * (1.0 - t)); };

    // Local start from the two square roots, keeping the one in the block.
    double t = 1e-6;
    Vec2c u;
    {
      const cplx root = std::sqrt((path(t) - xs) / local_[s - 1].c);
      std::optional<Vec2c> best;
      double best_v = std::numeric_limits<double>::infinity();
      for (double sg : {1.0, -1.0}) {
        const auto sol = solve_x(add(h, local_[s - 1].v, sg * root), path(t), nullptr, false);
        if (!sol) continue;
        const double viol = jacobian_point(*sol, mp_.omega).block_violation();
        if (viol < best_v) {
          best_v = viol;
          best = sol;
        }
      }
      if (!best) throw SolverError("u_of_x: no local start near vertex " + std::to_string(s));
      u = *best;
    }
    cplx w = vertex_w_[s - 1];
    {
      double arg = 0.0;
      w += w_increment(h, u, choose_char(h, u), &arg);
    }

    Vec2c u_prev = u;
    double t_prev = 0.0, dt = t;
    int steps = 0;
    while (t < 1.0) {
      if (++steps > opt_.max_path_steps || dt < 1e-14) throw SolverError("u_of_x: continuation failed");
      const double tn = std::min(1.0, t + dt);
      // Secant predictor (in sqrt(t) near the vertex, where u ~ sqrt(x - x_s)).
      Vec2c guess = u;
      if (t_prev > 0.0 || steps > 1) {
        const double a = (std::sqrt(tn) - std::sqrt(t)) / (std::sqrt(t) - std::sqrt(t_prev));
        if (std::isfinite(a) && a < 4.0) guess = add(u, add(u, u_prev, -1.0), a);
      }
      int iters = 0;
      const auto sol = solve_x(guess, path(tn), &iters, tn >= 1.0);
      double arg = 10.0;
      cplx dw = 0.0;
      if (sol) dw = w_increment(u, *sol, choose_char(u, *sol), &arg);
      if (sol && arg < 0.5) {
        u_prev = u;
        t_prev = t;
        u = *sol;
        w += dw;
        t = tn;
        dt *= iters <= 4 ? 2.0 : 1.0;
      } else {
        dt *= 0.5;
      }
    }
    const cplx xr = x_of_u(u);
    const double miss = std::abs(x_star) <= 1.0 ? std::abs(xr - x_star) : std::abs(1.0 / xr - 1.0 / x_star);
    const double allowed = std::abs(x_star) <= 1.0 ? 10.0 * opt_.value_tol
                                                   : std::max(10.0 * opt_.value_tol / std::abs(x_star), 10.0 * kReciprocalFloor);
    if (!(miss <= allowed))
      throw SolverError("u_of_x: final residual above tolerance");
    return {jacobian_point(u, mp_.omega), w};
  }

  const Anchor& anchor() const {
    if (!anchor_) {
      const double a = branch_x_[2], b = branch_x_[3];
      const cplx xa(0.5 * (a + b), 0.5 * (b - a));
      const Tracked tr = track_x(xa);
      anchor_ = Anchor{tr.point.u, tr.w};
    }
    return *anchor_;
  }

  // Follow the straight w-path from `from` to `to`; u, w hold the current
  // point on entry and the endpoint on exit.
  void track_w_leg(cplx from, cplx to, Vec2c& u, cplx& w, bool last) const {
    const PolygonSpec& P = mp_.polygon;
    const double scale = std::max({P.h_plus, P.h_minus, 1.0});
    double t = 0.0;
    double dt = std::min(1.0, 0.1 * std::max(P.boundary_distance(from), 1e-3 * scale) / std::abs(to - from));
    Vec2c u_prev = u;
    double t_prev = -1.0;
    int steps = 0;
    while (t < 1.0) {
      if (++steps > opt_.max_path_steps || dt < 1e-13) throw SolverError("u_of_w: continuation failed");
      const double tn = std::min(1.0, t + dt);
      const cplx target = from + (to - from) * tn;
      const Vec2c ref = u;
      const cplx wref = w;
      const ThetaCharacteristic& c = choose_char(ref, ref);
      auto eval = [&](const Vec2c& v) {
        const auto tv = theta35(v);
        const Vec2c g = w_grad(v, c);
        System out;
        out.first = {tv.value, wref + w_increment(ref, v, c, nullptr) - target};
        out.second[0] = {tv.grad[0], tv.grad[1]};
        out.second[1] = {g[0], g[1]};
        return out;
      };
      Vec2c guess = u;
      if (t_prev >= 0.0) guess = add(u, add(u, u_prev, -1.0), (tn - t) / (t - t_prev));
      int iters = 0;
      const bool final = last && tn >= 1.0;
      const auto sol = newton2(guess, eval, opt_.theta_tol,
                               (final ? 0.1 * opt_.value_tol : kPathTol) * scale, &iters, final);
      double arg = 10.0;
      cplx dw = 0.0;
      if (sol) dw = w_increment(ref, *sol, c, &arg);
      if (sol && arg < 0.5) {
        u_prev = u;
        t_prev = t;
        u = *sol;
        w = wref + dw;
        t = tn;
        const double room = P.boundary_distance(target);
        dt = std::min(iters <= 4 ? 2.0 * dt : dt, std::max(0.5 * room, 1e-4 * scale) / std::abs(to - from));
      } else {
        dt *= 0.5;
      }
    }
  }

  // Target for the x or w equation at intermediate continuation points.
  // Increments of w telescope, so only the endpoint needs full accuracy;
  // theta[35] = 0 is always enforced tightly because the two odd
  // characteristics give equal increments only on the curve.
  static constexpr double kPathTol = 1e-8;
  static constexpr double kReciprocalFloor = 1e-15;

  MappingParams mp_;
  MapOptions opt_;
  RiemannMatrix pi_;
  ThetaCharacteristic c35_, c3_, c5_;
  cplx const_{1.0};
  std::array<Vec2c, 6> vertex_u_{};
  std::array<cplx, 6> vertex_w_{};
  std::array<double, 6> branch_x_{};
  std::array<LocalModel, 6> local_{};
  mutable std::optional<Anchor> anchor_;
};

}  // namespace damflow
