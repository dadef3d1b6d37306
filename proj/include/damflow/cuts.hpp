#pragma once

// Octagon with up to three axis-aligned cuts from the intruding corners w2,
// w4, w5 (an 11-gon with a full angle at each cut tip).
//
// A cut at w_j moves the zero of dw from the branch point p_j to a point z_j
// on a neighbouring oval. The mapping formula is unchanged; z_j adds two
// real unknowns and three equations:
//   divisor  theta[35](z_j) = 0
//   wedge    d theta[35] ^ dw = 0 at z_j (the zero of dw)
//   length   (w(z_j) - w_j) . d_j = L_j  (signed, along the cut direction d_j)
// The wedge rows at the half-periods of cut corners are dropped; the other
// octagon rows stay. With C eliminated as before the Newton system has 13
// unknowns. Near zero length the tip moves like (z - p_j)^3, so the solver
// uses the cube root of the length row and continues in L^(1/3).

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "damflow/flow.hpp"
#include "damflow/param_solver.hpp"

namespace damflow {

enum class CutDirection { vertical, horizontal };

inline std::string to_string(CutDirection d) { return d == CutDirection::vertical ? "vertical" : "horizontal"; }

inline CutDirection parse_cut_direction(const std::string& s) {
  if (s == "vertical") return CutDirection::vertical;
  if (s == "horizontal") return CutDirection::horizontal;
  throw std::invalid_argument("cut direction must be \"vertical\" or \"horizontal\", got \"" + s + "\"");
}

struct CutSpec {
  static constexpr std::array<int, 3> corners{2, 4, 5};

  PolygonSpec base;
  std::array<double, 3> lengths{0.0, 0.0, 0.0};
  std::array<CutDirection, 3> directions{CutDirection::vertical, CutDirection::vertical, CutDirection::vertical};

  /// Octagon side (1..5) whose line the cut continues. Sides alternate
  /// vertical (odd) and horizontal (even), so every intruding corner meets
  /// one of each and both directions are realizable.
  int extended_side(int k) const {
    const int j = corners.at(static_cast<std::size_t>(k));
    const bool incoming_vertical = (j - 1) % 2 == 1;
    return incoming_vertical == (directions[k] == CutDirection::vertical) ? j - 1 : j;
  }

  /// z_j moves along real directions of the Jacobian for horizontal cuts and
  /// along imaginary ones for vertical cuts.
  bool real_oval(int k) const { return directions[k] == CutDirection::horizontal; }

  cplx corner(int k) const { return base.vertices()[corners.at(static_cast<std::size_t>(k)) - 1]; }

  /// Unit vector from the corner towards the tip.
  cplx unit_direction(int k) const {
    const auto v = base.vertices();
    const int j = corners.at(static_cast<std::size_t>(k));
    const cplx d = extended_side(k) == j - 1 ? v[j - 1] - v[j - 2] : v[j - 1] - v[j];
    return d / std::abs(d);
  }

  cplx tip(int k) const { return corner(k) + lengths[k] * unit_direction(k); }

  bool is_zero() const { return lengths[0] == 0.0 && lengths[1] == 0.0 && lengths[2] == 0.0; }

  CutSpec scaled(double s) const {
    CutSpec c = *this;
    c.base = base.scaled(s);
    for (double& l : c.lengths) l *= s;
    return c;
  }

  /// Geometric admissibility: the base octagon's rules, then per cut a
  /// finite non-negative length, a tip strictly inside, and no contact with
  /// the boundary or another cut.
  std::vector<ConstraintCheck> checks() const {
    std::vector<ConstraintCheck> out = base.checks();
    for (int k = 0; k < 3; ++k) {
      const std::string name = "cut_w" + std::to_string(corners[k]);
      const double L = lengths[k];
      if (!(L >= 0.0) || !std::isfinite(L)) {
        out.push_back({name, "cut length must be finite and >= 0", false, L});
        continue;
      }
      if (L == 0.0) continue;
      double clearance = std::numeric_limits<double>::infinity();
      bool inside = true;
      const int samples = 256;
      for (int i = 1; i <= samples; ++i) {
        const cplx p = corner(k) + (L * i / samples) * unit_direction(k);
        inside = inside && base.contains(p);
        clearance = std::min(clearance, p.imag() - base.bed_level());
      }
      const cplx t = tip(k);
      clearance = std::min(clearance, base.boundary_distance(t));
      out.push_back({name, "cut must stay strictly inside the domain", inside && clearance > 0.0,
                     inside ? clearance : -clearance});
    }
    for (int a = 0; a < 3; ++a)
      for (int b = a + 1; b < 3; ++b) {
        if (!(lengths[a] > 0.0 && lengths[b] > 0.0)) continue;
        const double gap = segment_gap(corner(a), tip(a), corner(b), tip(b));
        out.push_back({"cuts_w" + std::to_string(corners[a]) + "_w" + std::to_string(corners[b]),
                       "cuts must not touch each other", gap > 0.0, gap});
      }
    return out;
  }

  bool is_admissible() const {
    for (const auto& c : checks())
      if (!c.passed) return false;
    return true;
  }

  void validate() const {
    for (const auto& c : checks())
      if (!c.passed) throw GeometryError("CutSpec: " + c.name + " violated (" + c.rule + ")");
  }

  std::string to_string() const {
    std::ostringstream os;
    os.precision(17);
    os << base.to_string() << " cuts";
    for (int k = 0; k < 3; ++k) os << " w" << corners[k] << ":" << lengths[k] << "/" << damflow::to_string(directions[k]);
    return os.str();
  }

 private:
  // Distance between two axis-aligned segments (0 when they touch).
  static double segment_gap(cplx a0, cplx a1, cplx b0, cplx b1) {
    auto point_seg = [](cplx p, cplx s0, cplx s1) {
      const cplx d = s1 - s0;
      const double t = std::clamp(((p - s0) * std::conj(d)).real() / std::norm(d), 0.0, 1.0);
      return std::abs(p - (s0 + t * d));
    };
    auto orient = [](cplx p, cplx q, cplx r) { return ((q - p) * std::conj(r - p)).imag(); };
    const double o1 = orient(a0, a1, b0), o2 = orient(a0, a1, b1), o3 = orient(b0, b1, a0), o4 = orient(b0, b1, a1);
    if (o1 * o2 < 0.0 && o3 * o4 < 0.0) return 0.0;
    return std::min({point_seg(a0, b0, b1), point_seg(a1, b0, b1), point_seg(b0, a0, a1), point_seg(b1, a0, a1)});
  }
};

/// Solved parameters of a cut polygon. z[k] is the chart coordinate of the
/// moved zero: u(z_k) = u(p_j) + z[k] on real ovals, u(p_j) + i z[k] otherwise,
/// with u(p_j) = (Pi eps + eps') / 2 from the branch characteristic.
struct ExtendedParams {
  MappingParams mp;
  std::array<Vec2d, 3> z{};
  CutSpec cuts;

  Vec2c z_point(int k) const {
    const Vec2c h = characteristic_point<cplx>(branch_characteristic(CutSpec::corners.at(static_cast<std::size_t>(k))),
                                               mp.riemann().pi());
    const cplx kap = cuts.real_oval(k) ? cplx(1.0) : cplx(0.0, 1.0);
    return {h[0] + kap * z[k][0], h[1] + kap * z[k][1]};
  }

  void validate() const {
    mp.validate();
    for (const auto& v : z)
      if (!std::isfinite(v[0]) || !std::isfinite(v[1])) throw std::invalid_argument("ExtendedParams: z must be finite");
  }
};

/// Residual rows: divisor at z (3), wedge at z (3), divisor at u+- (2), side
/// rows C1, C2, H1, H5 (4), cut lengths (3).
struct ExtendedResidual {
  std::array<double, 15> r{};

  static constexpr std::array<const char*, 15> names{
      "divisor_z2", "divisor_z4", "divisor_z5",    "wedge_z2",    "wedge_z4",
      "wedge_z5",   "divisor_plus", "divisor_minus", "period_c1",  "period_c2",
      "period_h1",  "period_h5",  "length_w2",     "length_w4",   "length_w5"};

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

// w(z) - w(h) from the log terms of characteristic `odd`, continued along
// the short path between the two points.
template <class S>
S w_difference(const Vec2<S>& z, const Vec2<S>& h, const ThetaCharacteristic& odd, const SymMat2<S>& pi,
               const Vec2<S>& up, const Vec2<S>& um, double hp, double hm, const S& c1, const S& c2,
               const SeriesControl& ctl) {
  using std::log;
  auto th = [&](const Vec2<S>& v) { return theta_series<S>(odd, v, pi, ctl, false).value; };
  auto l = [&](const Vec2<S>& a) {
    return log(th(vadd(a, z, -1.0)) / th(vadd(a, h, -1.0))) - log(th(vadd(a, z)) / th(vadd(a, h)));
  };
  return (hm / std::numbers::pi) * l(um) - (hp / std::numbers::pi) * l(up) + c1 * (z[0] - h[0]) + c2 * (z[1] - h[1]);
}

// On real ovals theta[35](h + r) carries the phase exp(-2 pi i eps.r); this
// factor removes it so one real component carries the row.
template <class S>
S oval_phase(const ThetaCharacteristic& c, bool real_oval, const S& r0, const S& r1) {
  using std::exp;
  if (!real_oval) return S(1.0);
  return exp(cplx(0.0, 2.0 * std::numbers::pi) * (c.eps[0] * r0 + c.eps[1] * r1));
}

template <class S>
S re_plus_im(const S& v) {
  return real_part(v) + imag_part(v);
}

struct CutSystem {
  std::array<double, 7> h{};       // H1..H5, H+, H- of the base octagon
  std::array<double, 3> length{};  // target lengths, same units as h
  std::array<bool, 3> real_oval{};
  std::array<cplx, 3> dir{};
};

inline CutSystem cut_system(const CutSpec& cs) {
  CutSystem sys;
  sys.h = cs.base.as_vector();
  for (int k = 0; k < 3; ++k) {
    sys.length[k] = cs.lengths[k];
    sys.real_oval[k] = cs.real_oval(k);
    sys.dir[k] = cs.unit_direction(k);
  }
  return sys;
}

// Pieces of cut k evaluated at the unknown vector p (13 entries).
template <class S>
struct CutPieces {
  S divisor, wedge, projection;
};

template <class S, std::size_t N>
CutPieces<S> cut_pieces(const std::array<S, N>& p, int k, const CutSystem& sys, const S& c1, const S& c2,
                           const SeriesControl& ctl, bool want_projection) {
  const cplx I(0.0, 1.0);
  const SymMat2<S> pi{I * p[0], I * p[1], I * p[2]};
  const Vec2<S> up{p[3], p[4]}, um{p[5], p[6]};
  const int j = CutSpec::corners[static_cast<std::size_t>(k)];
  const ThetaCharacteristic c = branch_characteristic(j);
  const ThetaCharacteristic odd = odd_char_near(j);
  const Vec2<S> h = characteristic_point<S>(c, pi);
  const S& r0 = p[7 + 2 * k];
  const S& r1 = p[8 + 2 * k];
  const cplx kap = sys.real_oval[k] ? cplx(1.0) : I;
  const Vec2<S> z{h[0] + kap * r0, h[1] + kap * r1};
  const S phase = oval_phase(c, sys.real_oval[k], r0, r1);
  CutPieces<S> out;
  out.divisor = theta_series<S>(char_from_points({3, 5}), z, pi, ctl, false).value * phase;
  out.wedge = wedge_at(z, odd, pi, up, um, sys.h[5], sys.h[6], c1, c2, ctl) * phase;
  if (want_projection)
    out.projection = real_part(w_difference(z, h, odd, pi, up, um, sys.h[5], sys.h[6], c1, c2, ctl) * std::conj(sys.dir[k]));
  return out;
}

// Newton rows (13) in p = (O11, O12, O22, u+, u-, z2, z4, z5). Zero-length
// cuts pin z_k = 0 and keep the wedge at the half-period.
template <class S>
std::array<S, 13> cut_core(const std::array<S, 13>& p, const CutSystem& sys, const SeriesControl& ctl) {
  const S c1(-2.0 * sys.h[1]), c2(2.0 * sys.h[3]);
  std::array<S, 13> r;
  const auto st = structure_rows(p, sys.h, ctl);
  for (int k = 0; k < 4; ++k) r[6 + k] = st[k];
  for (int k = 0; k < 3; ++k) {
    const bool active = sys.length[k] > 0.0;
    const auto pc = cut_pieces(p, k, sys, c1, c2, ctl, active);
    r[3 + k] = re_plus_im(pc.wedge);
    if (active) {
      r[k] = re_plus_im(pc.divisor);
      r[10 + k] = real_cbrt(pc.projection) - S(std::cbrt(sys.length[k]));
    } else {
      r[k] = p[7 + 2 * k];
      r[10 + k] = p[8 + 2 * k];
    }
  }
  return r;
}

inline std::array<double, 13> pack_ext(const ExtendedParams& ep) {
  const auto a = pack(ep.mp);
  std::array<double, 13> x{};
  for (int k = 0; k < 7; ++k) x[k] = a[k];
  for (int k = 0; k < 3; ++k) {
    x[7 + 2 * k] = ep.z[k][0];
    x[8 + 2 * k] = ep.z[k][1];
  }
  return x;
}

inline ExtendedParams unpack_ext(const Eigen::VectorXd& x, const CutSpec& cs) {
  ExtendedParams ep;
  ep.mp = unpack(x.head(7), cs.base);
  for (int k = 0; k < 3; ++k) ep.z[k] = {x[7 + 2 * k], x[8 + 2 * k]};
  ep.cuts = cs;
  return ep;
}

inline Eigen::VectorXd cut_eval(const Eigen::VectorXd& x, const CutSystem& sys, const SeriesControl& ctl,
                                Eigen::MatrixXd* jac) {
  Eigen::VectorXd r(13);
  if (jac) {
    std::array<Jet<13>, 13> p;
    for (int k = 0; k < 13; ++k) p[k] = Jet<13>::variable(x[k], k);
    const auto rj = cut_core(p, sys, ctl);
    jac->resize(13, 13);
    for (int i = 0; i < 13; ++i) {
      r[i] = rj[i].v.real();
      for (int k = 0; k < 13; ++k) (*jac)(i, k) = rj[i].d[k].real();
    }
  } else {
    std::array<cplx, 13> p;
    for (int k = 0; k < 13; ++k) p[k] = x[k];
    const auto rc = cut_core(p, sys, ctl);
    for (int i = 0; i < 13; ++i) r[i] = rc[i].real();
  }
  return r;
}

inline bool in_cut_chart(const Eigen::VectorXd& x) {
  if (!in_chart(x.head(7))) return false;
  return x.tail(6).allFinite() && x.tail(6).cwiseAbs().maxCoeff() < 0.45;
}

// Point of the oval through the half-period of corner k at tangent
// parameter s, for parameters p (first 7 entries used).
inline Vec2d oval_point(const std::array<double, 13>& p, int k, const CutSystem& sys, double s,
                        const SeriesControl& ctl) {
  const cplx I(0.0, 1.0);
  const SymMat2<cplx> pi{I * p[0], I * p[1], I * p[2]};
  const ThetaCharacteristic c = branch_characteristic(CutSpec::corners[static_cast<std::size_t>(k)]);
  const ThetaCharacteristic c35 = char_from_points({3, 5});
  const Vec2c h = characteristic_point<cplx>(c, pi);
  const cplx kap = sys.real_oval[k] ? cplx(1.0) : I;
  // Tangent and normal in the real chart.
  const Vec2c g = theta_series<cplx>(c35, h, pi, ctl, true).grad;
  const cplx gk0 = g[0] * kap, gk1 = g[1] * kap;
  const cplx ph = std::abs(gk0) > std::abs(gk1) ? gk0 / std::abs(gk0) : gk1 / std::abs(gk1);
  Vec2d nrm{(gk0 / ph).real(), (gk1 / ph).real()};
  const double nn = std::hypot(nrm[0], nrm[1]);
  nrm = {nrm[0] / nn, nrm[1] / nn};
  const Vec2d tan{nrm[1], -nrm[0]};
  double t = 0.0;
  for (int it = 0; it < 30; ++it) {
    const Vec2d r{s * tan[0] + t * nrm[0], s * tan[1] + t * nrm[1]};
    const Vec2c u{h[0] + kap * r[0], h[1] + kap * r[1]};
    const auto tv = theta_series<cplx>(c35, u, pi, ctl, true);
    const cplx phase = oval_phase(c, sys.real_oval[k], cplx(r[0]), cplx(r[1]));
    const cplx f = tv.value * phase;
    const cplx df = (tv.grad[0] * kap * nrm[0] + tv.grad[1] * kap * nrm[1]) * phase;
    const double fv = (f / ph).real(), dv = (df / ph).real();
    if (dv == 0.0) break;
    const double step = fv / dv;
    t -= step;
    if (std::abs(step) < 1e-15) break;
  }
  return {s * tan[0] + t * nrm[0], s * tan[1] + t * nrm[1]};
}

// Start value for a cut that becomes active with target length L (same
// units as sys.h): the zero sits on the sheet where the uncut map runs along
// the extended side, at the parameter where twice the uncut offset is L.
inline Vec2d initial_zero(const std::array<double, 13>& p, int k, const CutSystem& sys, double L,
                          const SeriesControl& ctl) {
  const double s0 = 0.02;
  std::array<cplx, 13> pc;
  for (int i = 0; i < 13; ++i) pc[i] = p[i];
  auto projection = [&](const Vec2d& r) {
    pc[7 + 2 * k] = r[0];
    pc[8 + 2 * k] = r[1];
    const cplx c1(-2.0 * sys.h[1]), c2(2.0 * sys.h[3]);
    return cut_pieces(pc, k, sys, c1, c2, ctl, true).projection.real();
  };
  Vec2d r = oval_point(p, k, sys, s0, ctl);
  double off = projection(r);
  double s = s0;
  if (off > 0.0) {
    s = -s0;
    r = oval_point(p, k, sys, s, ctl);
    off = projection(r);
  }
  if (!(off < 0.0)) throw SolverError("solve_cut_params: cannot place the zero of the cut at w" +
                                      std::to_string(CutSpec::corners[static_cast<std::size_t>(k)]));
  return oval_point(p, k, sys, s * std::cbrt(L / (2.0 * -off)), ctl);
}

}  // namespace detail

/// The fifteen residual rows of `ep` for the cut polygon `cs`.
inline ExtendedResidual extended_residual(const ExtendedParams& ep, const CutSpec& cs,
                                          const SeriesControl& ctl = {1e-15, 40}) {
  ep.validate();
  const ResidualVector base = residual(ep.mp, cs.base, ctl);
  const detail::CutSystem sys = detail::cut_system(cs);
  const auto x = detail::pack_ext(ep);
  std::array<cplx, 13> p;
  for (int k = 0; k < 13; ++k) p[k] = x[k];
  ExtendedResidual out;
  for (int k = 0; k < 3; ++k) {
    const auto pc = detail::cut_pieces(p, k, sys, cplx(ep.mp.c1), cplx(ep.mp.c2), ctl, true);
    out.r[k] = detail::re_plus_im(pc.divisor).real();
    out.r[3 + k] = detail::re_plus_im(pc.wedge).real();
    out.r[12 + k] = pc.projection.real() - cs.lengths[k];
  }
  for (int k = 0; k < 6; ++k) out.r[6 + k] = base.r[3 + k];
  return out;
}

struct CutSolveReport {
  ExtendedParams params;
  bool converged = false;
  double residual_norm = 0.0;
  int newton_steps = 0;
  int continuation_steps = 0;
  std::string message;
};

/// x-coordinates of the moved zeros (on the real axis of the half-plane).
inline std::array<double, 3> cut_zero_x(const ExtendedParams& ep) {
  const ScMap map(ep.mp);
  std::array<double, 3> out{};
  for (int k = 0; k < 3; ++k) out[k] = map.x_of_u(ep.z_point(k)).real();
  return out;
}

namespace detail {

// Continue from a solved `start` (same base and directions) to `target`,
// interpolating each cut length linearly in L^(1/3).
inline CutSolveReport continue_cuts(const ExtendedParams& start, const CutSpec& target, const SolverConfig& cfg,
                                    double first_step) {
  const double scale = 1.0 / target.base.h_minus;
  const CutSpec unit = target.scaled(scale);
  std::array<double, 3> from{}, to{};
  for (int k = 0; k < 3; ++k) {
    from[k] = std::cbrt(start.cuts.lengths[k] * scale);
    to[k] = std::cbrt(unit.lengths[k]);
  }
  auto system_at = [&](double t) {
    CutSystem sys = cut_system(unit);
    for (int k = 0; k < 3; ++k) sys.length[k] = std::pow((1.0 - t) * from[k] + t * to[k], 3.0);
    if (t >= 1.0) sys.length = unit.lengths;
    return sys;
  };
  const auto packed = pack_ext(start);
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(packed.data(), 13);
  Eigen::VectorXd x_prev = x;
  double t = 0.0, t_prev = -1.0, dt = std::min(1.0, first_step);
  int backtracks = 0;
  CutSolveReport rep;
  NewtonOptions opt;
  opt.tol = cfg.tol;
  opt.max_iter = cfg.max_newton;
  opt.max_step = 0.05;
  const std::function<bool(const Eigen::VectorXd&)> chart = in_cut_chart;
  CutSystem current = system_at(0.0);
  while (true) {
    const double tn = std::min(1.0, t + dt);
    const CutSystem sys = system_at(tn);
    Eigen::VectorXd guess = x;
    if (t_prev >= 0.0) guess = x + (x - x_prev) * ((tn - t) / (t - t_prev));
    if (!chart(guess)) guess = x;
    NewtonResult nr;
    try {
      std::array<double, 13> xa{};
      for (int i = 0; i < 13; ++i) xa[i] = x[i];
      for (int k = 0; k < 3; ++k)
        if (current.length[k] == 0.0 && sys.length[k] > 0.0) {
          const Vec2d r = initial_zero(xa, k, sys, sys.length[k], cfg.series);
          guess[7 + 2 * k] = r[0];
          guess[8 + 2 * k] = r[1];
        }
      auto eval = [&](const Eigen::VectorXd& v, Eigen::MatrixXd* jac) { return cut_eval(v, sys, cfg.series, jac); };
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
      current = sys;
      ++rep.continuation_steps;
      if (t >= 1.0) break;
      dt = std::min(1.0 - t, 1.5 * dt);
    } else {
      if (++backtracks > cfg.max_backtracks) {
        CutSpec reached = target;
        for (int k = 0; k < 3; ++k) reached.lengths[k] = current.length[k] / scale;
        rep.params = unpack_ext(x, reached);
        rep.params.mp.c1 = -2.0 * target.base.H[1];
        rep.params.mp.c2 = 2.0 * target.base.H[3];
        rep.message = "continuation exhausted at t = " + std::to_string(t);
        rep.residual_norm = nr.residual_norm;
        return rep;
      }
      dt *= 0.5;
    }
  }
  rep.params = unpack_ext(x, target);
  rep.residual_norm = extended_residual(rep.params, target, cfg.series).norm() / target.base.h_minus;
  rep.converged = rep.residual_norm <= 10.0 * cfg.tol && rep.params.mp.in_lemma_cone() && rep.params.mp.lemma_ordering();
  rep.message = rep.converged ? "converged" : "solution outside the Lemma constraints or above tolerance";
  if (rep.converged) {
    // Each moved zero must sit inside the preimage interval of its side.
    const ScMap map(rep.params.mp);
    for (int k = 0; k < 3; ++k) {
      if (target.lengths[k] == 0.0) continue;
      const int s = target.extended_side(k);
      const double xz = map.x_of_u(rep.params.z_point(k)).real();
      if (!(xz > map.branch_x(s) && xz < map.branch_x(s + 1))) {
        rep.converged = false;
        rep.message = "zero of the cut at w" + std::to_string(CutSpec::corners[static_cast<std::size_t>(k)]) +
                      " left the preimage interval of its side";
      }
    }
  }
  return rep;
}

}  // namespace detail

/// Octagon parameters with all zeros at the half-periods.
inline ExtendedParams zero_cut_params(const MappingParams& mp, const CutSpec& cs) {
  ExtendedParams ep;
  ep.mp = mp;
  ep.cuts = cs;
  ep.cuts.lengths = {0.0, 0.0, 0.0};
  return ep;
}

/// Solve with a diagnostic report. A warm start with the same base and cut
/// directions is continued in the cut lengths; otherwise the octagon is
/// solved first and the cuts are grown from zero.
inline CutSolveReport solve_cut_params_report(const CutSpec& cs, const SolverConfig& cfg = {},
                                              const std::optional<ExtendedParams>& warm_start = std::nullopt) {
  cfg.validate();
  cs.validate();
  detail::check_guard(cs.base, cfg);
  if (warm_start) {
    warm_start->validate();
    const bool same = warm_start->cuts.base.as_vector() == cs.base.as_vector() &&
                      warm_start->cuts.directions == cs.directions;
    if (same) return detail::continue_cuts(*warm_start, cs, cfg, 1.0);
  }
  std::optional<MappingParams> octagon_warm;
  if (warm_start && warm_start->cuts.is_zero()) octagon_warm = warm_start->mp;
  const SolveReport oct = solve_params_report(cs.base, cfg, octagon_warm);
  if (!oct.converged) {
    CutSolveReport rep;
    rep.params = zero_cut_params(oct.params, cs);
    rep.newton_steps = oct.newton_steps;
    rep.message = "octagon solve failed: " + oct.message;
    return rep;
  }
  CutSolveReport rep = detail::continue_cuts(zero_cut_params(oct.params, cs), cs, cfg, cs.is_zero() ? 1.0 : 0.25);
  rep.newton_steps += oct.newton_steps;
  return rep;
}

/// Parameters of the cut polygon; throws GeometryError or SolverError.
inline ExtendedParams solve_cut_params(const CutSpec& cs, const SolverConfig& cfg = {},
                                       const std::optional<ExtendedParams>& warm_start = std::nullopt) {
  const CutSolveReport rep = solve_cut_params_report(cs, cfg, warm_start);
  if (!rep.converged) {
    std::ostringstream os;
    os << "solve_cut_params: " << rep.message << " (residual " << rep.residual_norm << ")";
    throw SolverError(os.str());
  }
  return rep.params;
}

struct SweepCell {
  std::array<double, 3> lengths{};
  bool ok = false;
  double kappa = 0.0;
  double lambda = 0.0;
  int newton_steps = 0;
  bool cached = false;
  std::string error;
};

/// Cells of a sweep in lexicographic order of (cut w2, cut w4, cut w5).
struct SweepTable {
  std::array<std::vector<double>, 3> grid;
  std::vector<SweepCell> cells;

  const SweepCell& at(std::size_t i, std::size_t j, std::size_t k) const {
    return cells.at((i * grid[1].size() + j) * grid[2].size() + k);
  }
};

struct SweepOptions {
  bool reverse = false;  // visit cells in reverse order within each row
  int threads = 1;       // rows run concurrently
  // Optional store of solved cells; lookup results are used without solving.
  std::function<std::optional<ExtendedParams>(const CutSpec&)> lookup;
  std::function<void(const CutSolveReport&)> store;
};

/// kappa over the product grid of cut lengths. Rows (fixed w2 length) are
/// warm-started cell to cell; failures are recorded and the sweep goes on.
inline SweepTable kappa_sweep(const CutSpec& cs_base, const std::array<std::vector<double>, 3>& grid,
                              const SolverConfig& cfg = {}, const SweepOptions& opt = {}) {
  for (const auto& g : grid)
    if (g.empty()) throw std::invalid_argument("kappa_sweep: every cut needs at least one length");
  SweepTable table;
  table.grid = grid;
  const std::size_t n0 = grid[0].size(), n1 = grid[1].size(), n2 = grid[2].size();
  table.cells.resize(n0 * n1 * n2);
  for (std::size_t i = 0; i < n0; ++i)
    for (std::size_t j = 0; j < n1; ++j)
      for (std::size_t k = 0; k < n2; ++k) table.cells[(i * n1 + j) * n2 + k].lengths = {grid[0][i], grid[1][j], grid[2][k]};

  const MappingParams octagon = solve_params(cs_base.base, cfg);
  auto run_row = [&](std::size_t i) {
    std::optional<ExtendedParams> warm = zero_cut_params(octagon, cs_base);
    const std::size_t row = n1 * n2;
    for (std::size_t q = 0; q < row; ++q) {
      SweepCell& cell = table.cells[i * row + (opt.reverse ? row - 1 - q : q)];
      CutSpec cs = cs_base;
      cs.lengths = cell.lengths;
      try {
        if (opt.lookup) {
          if (auto hit = opt.lookup(cs)) {
            const RectModel rm = rect_model(hit->mp);
            cell.kappa = rm.kappa;
            cell.lambda = rm.lambda;
            cell.ok = cell.cached = true;
            warm = std::move(hit);
            continue;
          }
        }
        const CutSolveReport rep = solve_cut_params_report(cs, cfg, warm);
        cell.newton_steps = rep.newton_steps;
        if (!rep.converged) throw SolverError(rep.message);
        const RectModel rm = rect_model(rep.params.mp);
        cell.kappa = rm.kappa;
        cell.lambda = rm.lambda;
        cell.ok = true;
        if (opt.store) opt.store(rep);
        warm = rep.params;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(opt.threads, static_cast<int>(n0)));
  if (threads == 1) {
    for (std::size_t q = 0; q < n0; ++q) run_row(opt.reverse ? n0 - 1 - q : q);
  } else {
    std::mutex m;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        while (true) {
          std::size_t i;
          {
            std::lock_guard<std::mutex> lock(m);
            if (next >= n0) return;
            i = next++;
          }
          run_row(opt.reverse ? n0 - 1 - i : i);
        }
      });
    for (auto& th : pool) th.join();
  }
  return table;
}

}  // namespace damflow
