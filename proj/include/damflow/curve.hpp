#pragma once

// Genus-2 curve y^2 = (x - x1)...(x - x6) with six real branch points.
//
// Conventions (upper sheet = lifted upper half-plane):
//   y+(x) = prod_s sqrt(x - x_s) with the principal root, so y+ > 0 on (x6, oo)
//   a_1, a_2 : twice the segments [x2, x3], [x4, x5]
//   b_1      : minus twice [x1, x2];   b_2 : twice [x5, x6]
// With these choices the normalized periods Pi are i * Omega with Omega
// positive definite, and the branch point p_s has Abel-Jacobi image with
// characteristic branch_characteristic(s) (base point p_1).

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "damflow/quadrature.hpp"
#include "damflow/theta.hpp"

namespace damflow {

class ConditioningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Six ordered real branch points plus the two marked poles of the
/// Schwarz-Christoffel differential (infinity allowed for either pole).
struct BranchConfig {
  std::array<double, 6> x{1, 2, 3, 4, 5, 6};
  double x_plus = 0.0;
  double x_minus = std::numeric_limits<double>::infinity();

  void validate(double min_relative_gap = 1e-12) const {
    for (double v : x)
      if (!std::isfinite(v)) throw std::invalid_argument("BranchConfig: branch points must be finite");
    for (int s = 0; s < 5; ++s)
      if (!(x[s] < x[s + 1])) throw std::invalid_argument("BranchConfig: branch points must be strictly increasing");
    const double span = x[5] - x[0];
    for (int s = 0; s < 5; ++s)
      if (x[s + 1] - x[s] < min_relative_gap * span)
        throw ConditioningError("BranchConfig: branch points nearly coincide");
    auto on_third_oval = [&](double v) { return std::isinf(v) || v > x[5] || v < x[0]; };
    if (!on_third_oval(x_plus) || !on_third_oval(x_minus))
      throw std::invalid_argument("BranchConfig: marked points must lie outside [x1, x6]");
    if (x_plus == x_minus) throw std::invalid_argument("BranchConfig: marked points must differ");
    if (std::isnan(x_plus) || std::isnan(x_minus)) throw std::invalid_argument("BranchConfig: NaN marked point");
    // Cyclic order along the real line must be x+, x1, ..., x6, x-.
    auto angle = [](double v) { return std::isinf(v) ? std::numbers::pi : 2.0 * std::atan(v); };
    auto pos = [&](double v) {
      const double d = angle(v) - angle(x[5]);
      return d > 0.0 ? d : d + 2.0 * std::numbers::pi;
    };
    if (!(pos(x_minus) < pos(x_plus)))
      throw std::invalid_argument("BranchConfig: marked points must follow the order x+, x1..x6, x-");
  }

  /// Real Moebius map sending (x+, x1, x-) to (0, 1, oo).
  double normalize(double v) const {
    if (std::isinf(x_minus)) return (v - x_plus) / (x[0] - x_plus);
    if (std::isinf(x_plus)) return (x[0] - x_minus) / (v - x_minus);
    if (std::isinf(v)) return (x[0] - x_minus) / (x[0] - x_plus);
    return ((v - x_plus) / (v - x_minus)) * ((x[0] - x_minus) / (x[0] - x_plus));
  }

  /// Same curve with x+ = 0, x1 = 1, x- = oo.
  BranchConfig normalized() const {
    BranchConfig out;
    for (int s = 0; s < 6; ++s) out.x[s] = normalize(x[s]);
    out.x_plus = 0.0;
    out.x_minus = std::numeric_limits<double>::infinity();
    return out;
  }
};

enum class Sheet { upper, lower };

/// A point of the curve given by its projection and sheet.
struct CurvePoint {
  cplx x;
  Sheet sheet = Sheet::upper;
};

/// Characteristic of u relative to Pi = i Omega: u = Pi e + e' with e, e' real.
inline ThetaCharacteristic characteristic_of(const Vec2c& u, const SymMat2d& om) {
  const double det = om.a11 * om.a22 - om.a12 * om.a12;
  const double i0 = u[0].imag(), i1 = u[1].imag();
  return {{(om.a22 * i0 - om.a12 * i1) / det, (-om.a12 * i0 + om.a11 * i1) / det},
          {u[0].real(), u[1].real()}};
}

/// Abel-Jacobi image together with its characteristic.
struct AJImage {
  Vec2c u;
  ThetaCharacteristic ch;

  /// Integer form (2e, 2e') of the characteristic.
  std::array<double, 4> integer_form() const {
    return {2 * ch.eps[0], 2 * ch.eps[1], 2 * ch.eps_prime[0], 2 * ch.eps_prime[1]};
  }
};

/// Quadrature-based period data of a fixed curve.
class HyperellipticCurve {
 public:
  explicit HyperellipticCurve(const BranchConfig& bc, double rel_tol = 1e-13) : bc_(bc), tol_(rel_tol) {
    bc_.validate();
    std::array<std::array<cplx, 2>, 5> raw;
    for (int k = 0; k < 5; ++k) raw[k] = raw_segment(k);

    Eigen::Matrix2d pa;
    double imag_part = 0.0;
    for (int k = 0; k < 2; ++k) {
      pa(0, k) = 2.0 * raw[1][k].real();
      pa(1, k) = 2.0 * raw[3][k].real();
      imag_part = std::max({imag_part, std::abs(raw[1][k].imag()), std::abs(raw[3][k].imag())});
    }
    if (imag_part > 1e-8 * pa.cwiseAbs().maxCoeff())
      throw ConditioningError("HyperellipticCurve: a-periods are not real");
    if (std::abs(pa.determinant()) < 1e-14 * pa.cwiseAbs().maxCoeff() * pa.cwiseAbs().maxCoeff())
      throw ConditioningError("HyperellipticCurve: singular a-period matrix");
    coef_ = pa.inverse();

    for (int k = 0; k < 5; ++k) segments_[k] = normalize(raw[k]);
    const Vec2c b1 = segments_[0], b2 = segments_[4];
    // Pi_{sj} = int_{b_s} du_j
    const cplx p11 = -2.0 * b1[0], p12 = -2.0 * b1[1];
    const cplx p21 = 2.0 * b2[0], p22 = 2.0 * b2[1];
    pi_raw_ = {p11, p12, p21, p22};
    riemann_ = RiemannMatrix(cplx(0, p11.imag()), cplx(0, p12.imag()), cplx(0, p21.imag()), cplx(0, p22.imag()));

    offsets_[0] = {0.0, 0.0};
    for (int k = 0; k < 5; ++k) offsets_[k + 1] = {offsets_[k][0] + segments_[k][0], offsets_[k][1] + segments_[k][1]};
  }

  const BranchConfig& config() const { return bc_; }

  /// Coefficients C with du_j = (C(0, j) x + C(1, j)) dx / y.
  const Eigen::Matrix2d& coefficients() const { return coef_; }

  /// Riemann matrix (real part of the raw quadrature dropped; see raw_periods).
  const RiemannMatrix& riemann_matrix() const { return *riemann_; }
  SymMat2d omega() const { return riemann_->omega(); }

  /// b-periods exactly as integrated, before dropping the real part.
  const std::array<cplx, 4>& raw_periods() const { return pi_raw_; }

  /// Normalized integral of du over [x_{k}, x_{k+1}], k = 1..5.
  Vec2c segment(int k) const { return segments_.at(static_cast<std::size_t>(k - 1)); }

  /// Image of the branch point p_s, s = 1..6, along the real axis.
  Vec2c branch_image(int s) const { return offsets_.at(static_cast<std::size_t>(s - 1)); }

  /// y+ at x in the closed upper half-plane.
  cplx y_plus(cplx x) const {
    cplx r = 1.0;
    for (double s : bc_.x) r *= std::sqrt(x - s);
    return r;
  }

  /// du/dx on the upper sheet.
  Vec2c differential(cplx x) const { return differential(x, 0.0); }

  /// du/dx at anchor + offset, with distances to branch points formed as
  /// (anchor - x_s) + offset.
  Vec2c differential(cplx anchor, cplx offset) const {
    cplx y = 1.0;
    for (double s : bc_.x) y *= std::sqrt((anchor - s) + offset);
    const cplx x = anchor + offset;
    const cplx inv = 1.0 / y;
    return {(coef_(0, 0) * x + coef_(1, 0)) * inv, (coef_(0, 1) * x + coef_(1, 1)) * inv};
  }

  /// Abel-Jacobi map with base point p_1. Real x (including +-oo) are
  /// integrated along the real axis, other x in the upper half-plane along
  /// a vertical-horizontal-vertical path.
  AJImage abel_jacobi(const CurvePoint& p) const {
    Vec2c u;
    if (p.x.imag() < 0.0) throw std::invalid_argument("abel_jacobi: x must lie in the closed upper half-plane");
    if (p.x.imag() == 0.0)
      u = real_image(p.x.real());
    else
      u = complex_image(p.x);
    if (p.sheet == Sheet::lower) u = {-u[0], -u[1]};
    return {u, characteristic_of(u, omega())};
  }

 private:
  // int over [x_k, x_{k+1}] of (x, 1) dx / y+, k zero-based.
  std::array<cplx, 2> raw_segment(int k) const {
    const double a = bc_.x[k], b = bc_.x[k + 1];
    auto others = [&](double x) {
      cplx r(0.0, 1.0);
      for (int s = 0; s < 6; ++s)
        if (s != k && s != k + 1) r *= std::sqrt(cplx(x - bc_.x[s], 0.0));
      return r;
    };
    const cplx i0 = chebyshev_integral([&](double x) { return x / others(x); }, a, b, tol_);
    const cplx i1 = chebyshev_integral([&](double x) { return 1.0 / others(x); }, a, b, tol_);
    return {i0, i1};
  }

  Vec2c normalize(const std::array<cplx, 2>& raw) const {
    return {raw[0] * coef_(0, 0) + raw[1] * coef_(1, 0), raw[0] * coef_(0, 1) + raw[1] * coef_(1, 1)};
  }

  template <class F>
  Vec2c integrate_vec(F&& quad) const {
    return {quad(0), quad(1)};
  }

  // Integral of du over [a, b] inside a gap between singularities, with the
  // requested endpoint treatment.
  Vec2c real_leg(double a, double b, bool sing_a, bool sing_b) const {
    auto comp = [&](int j) {
      auto f = [&, j](cplx anchor, cplx offset) { return differential(anchor, offset)[j]; };
      if (sing_a && sing_b) {
        const double m = 0.5 * (a + b);
        return sqrt_left_integral(f, a, m, tol_) + sqrt_right_integral(f, m, b, tol_);
      }
      if (sing_a) return sqrt_left_integral(f, a, b, tol_);
      if (sing_b) return sqrt_right_integral(f, a, b, tol_);
      return adaptive_integral([&](double x) { return f(cplx(x), cplx(0.0)); }, a, b, tol_);
    };
    return integrate_vec(comp);
  }

  // Integral of du from x_from to x_to with both on one side beyond the
  // branch points, in the variable t = 1/x (infinite endpoints allowed).
  Vec2c tail_leg(double x_from, double x_to) const {
    auto inv = [](double v) { return std::isinf(v) ? 0.0 : 1.0 / v; };
    const double t0 = inv(x_from), t1 = inv(x_to);
    auto comp = [&](int j) {
      auto f = [&, j](double t) {
        double prod = 1.0;
        for (double s : bc_.x) prod *= std::sqrt(1.0 - s * t);
        return cplx(-(coef_(0, j) + coef_(1, j) * t) / prod);
      };
      if (t0 <= t1) return adaptive_integral(f, t0, t1, tol_);
      return -adaptive_integral(f, t1, t0, tol_);
    };
    return integrate_vec(comp);
  }

  Vec2c real_image(double x) const {
    const auto& xs = bc_.x;
    const double span = xs[5] - xs[0];
    auto add = [](Vec2c a, Vec2c b, double sb = 1.0) { return Vec2c{a[0] + sb * b[0], a[1] + sb * b[1]}; };
    if (x == xs[5]) return offsets_[5];
    if (x == xs[0]) return offsets_[0];
    if (x > xs[5]) {
      const double split = xs[5] + std::max(span, std::abs(xs[5]));
      if (x <= split) return add(offsets_[5], real_leg(xs[5], x, true, false));
      return add(add(offsets_[5], real_leg(xs[5], split, true, false)), tail_leg(split, x));
    }
    if (x < xs[0]) {
      const double split = xs[0] - std::max(span, std::abs(xs[0]));
      // u(x) = -int_x^{x1} du
      if (x >= split) return add(offsets_[0], real_leg(x, xs[0], false, true), -1.0);
      return add(add(offsets_[0], real_leg(split, xs[0], false, true), -1.0), tail_leg(split, x));
    }
    const int k = static_cast<int>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin()) - 1;
    if (x == xs[k]) return offsets_[k];
    if (x - xs[k] <= xs[k + 1] - x) return add(offsets_[k], real_leg(xs[k], x, true, false));
    return add(offsets_[k + 1], real_leg(x, xs[k + 1], false, true), -1.0);
  }

  Vec2c complex_image(cplx x) const {
    const double height = 0.5 * (bc_.x[5] - bc_.x[0]);
    auto comp = [&](int j) {
      return upper_path_integral([&, j](cplx a, cplx d) { return differential(a, d)[j]; }, bc_.x[0], x, height,
                                 tol_);
    };
    return integrate_vec(comp);
  }

  BranchConfig bc_;
  double tol_;
  Eigen::Matrix2d coef_;
  std::array<Vec2c, 5> segments_{};
  std::array<Vec2c, 6> offsets_{};
  std::array<cplx, 4> pi_raw_{};
  std::optional<RiemannMatrix> riemann_;
};

/// Coefficient matrix C of the normalized holomorphic differentials.
inline Eigen::Matrix2d normalized_basis(const BranchConfig& bc) { return HyperellipticCurve(bc).coefficients(); }

/// Normalized period matrix of the curve.
inline RiemannMatrix period_matrix(const BranchConfig& bc) { return HyperellipticCurve(bc).riemann_matrix(); }

/// Abel-Jacobi image of a curve point with base point p_1.
inline AJImage aj_map(const BranchConfig& bc, const CurvePoint& p) { return HyperellipticCurve(bc).abel_jacobi(p); }

}  // namespace damflow
