#pragma once

// Second mapping stage: upper half-plane (with marked points 0, 1, lambda, oo)
// onto the rectangle of width 1 and height kappa.
//
//   f(x) = int_1^x dt / sqrt(t (t - 1)(t - lambda))  /  int_1^lambda (same)
//
// sends 1 -> 0, lambda -> 1, oo -> 1 + i kappa, 0 -> i kappa. Horizontal
// lines Im f = const are streamlines, vertical lines Re f = const are
// equipotentials.

#include <cmath>
#include <limits>
#include <complex>
#include <numbers>
#include <stdexcept>

#include "damflow/elliptic.hpp"

namespace damflow {

/// Darcy permeability and effective head drop.
struct FlowSpec {
  double permeability = 1.0;
  double head_drop = 1.0;

  void validate() const {
    if (!(permeability > 0.0) || !(head_drop > 0.0))
      throw std::invalid_argument("FlowSpec: permeability and head_drop must be positive");
  }
};

/// Aspect ratio from the hypergeometric quotient
///   kappa = lambda^(-1/2) F(1/2, 1/2; 1 | 1/lambda) / F(1/2, 1/2; 1 | 1 - lambda),
/// with F evaluated through Carlson's R_F.
inline double aspect_ratio(double lambda) {
  if (!(lambda > 1.0)) throw std::domain_error("aspect_ratio: need lambda > 1");
  return hyp2f1_half_carlson(1.0 / lambda) / (std::sqrt(lambda) * hyp2f1_half_carlson(1.0 - lambda));
}

/// Aspect ratio as the quotient of complete elliptic integrals
/// K(m = 1/lambda) / K(m = 1 - 1/lambda), each by AGM.
inline double aspect_ratio_agm(double lambda) {
  if (!(lambda > 1.0)) throw std::domain_error("aspect_ratio_agm: need lambda > 1");
  return complete_k_agm(1.0 / lambda) / complete_k_agm(1.0 - 1.0 / lambda);
}

/// Rectangle parameters of a solved mapping.
struct RectModel {
  double lambda = 2.0;
  double kappa = 1.0;

  static RectModel from_lambda(double lambda) { return {lambda, aspect_ratio(lambda)}; }

  void validate() const {
    if (!(lambda > 1.0)) throw std::invalid_argument("RectModel: lambda must exceed 1");
    if (!(kappa > 0.0)) throw std::invalid_argument("RectModel: kappa must be positive");
  }
};

/// Total seepage per unit dam length.
inline double total_flow(const RectModel& rm, const FlowSpec& fs) {
  rm.validate();
  fs.validate();
  return fs.permeability * rm.kappa * fs.head_drop;
}

namespace detail {

// int_x^oo dt / sqrt(t (t - 1)(t - lambda)) = 2 R_F(x, x - 1, x - lambda),
// boundary values taken from above.
inline cplx tail_integral(cplx x, double lambda) {
  auto above = [](cplx v) { return v.imag() == 0.0 ? cplx(v.real(), +0.0) : v; };
  return 2.0 * carlson_rf(above(x), above(x - 1.0), above(x - lambda));
}

}  // namespace detail

/// Upper half-plane -> rectangle [0, 1] x [0, kappa].
inline cplx rect_map(cplx x, double lambda) {
  if (!(lambda > 1.0)) throw std::domain_error("rect_map: need lambda > 1");
  if (x.imag() < 0.0) throw std::domain_error("rect_map: x must lie in the closed upper half-plane");
  const double kappa = aspect_ratio(lambda);
  if (std::isinf(x.real()) || std::isinf(x.imag())) return {1.0, kappa};
  if (x == 0.0) return {0.0, kappa};
  if (x == 1.0) return 0.0;
  if (x == lambda) return 1.0;
  const double k = 1.0 / std::sqrt(lambda);
  const double width = 2.0 * k * complete_k_agm(1.0 - 1.0 / lambda);  // int_1^lambda |.|
  const double tail_lambda = 2.0 * k * complete_k_agm(1.0 / lambda);  // int_lambda^oo
  // f = (G(1) - G(x)) / D with G(1) = D + G(lambda) and D = -i * width.
  const cplx d(0.0, -width);
  return (d + tail_lambda - detail::tail_integral(x, lambda)) / d;
}

/// Rectangle -> upper half-plane, x = lambda / sn^2(K - i (1 - f) K', 1/sqrt(lambda)),
/// followed by Newton polishing against rect_map.
inline cplx rect_inverse(cplx f, double lambda) {
  if (!(lambda > 1.0)) throw std::domain_error("rect_inverse: need lambda > 1");
  const double kappa = aspect_ratio(lambda);
  const double slack = 1e-12;
  if (f.real() < -slack || f.real() > 1.0 + slack || f.imag() < -slack || f.imag() > kappa * (1.0 + slack))
    throw std::domain_error("rect_inverse: point outside the rectangle");
  const double k = 1.0 / std::sqrt(lambda);
  const double kk = complete_k_agm(1.0 / lambda);
  const double kkp = complete_k_agm(1.0 - 1.0 / lambda);
  // u = sqrt(lambda) G / 2 with G = G(lambda) + (1 - f) D.
  const cplx u = kk + (1.0 - f) * cplx(0.0, -kkp);
  const cplx sn = jacobi_sn(u, k);
  if (std::abs(sn) < 1e-300) return {std::numeric_limits<double>::infinity(), 0.0};
  cplx x = lambda / (sn * sn);
  if (x.imag() < 0.0) x.imag(0.0);
  // Newton polish: df/dx = 1 / (D sqrt(x (x - 1)(x - lambda))).
  const double width = 2.0 * k * kkp;
  for (int it = 0; it < 2; ++it) {
    if (!(x.imag() > 1e-8 * (1.0 + std::abs(x)))) break;
    const cplx r = rect_map(x, lambda) - f;
    const cplx dfdx = 1.0 / (cplx(0.0, -width) * std::sqrt(x) * std::sqrt(x - 1.0) * std::sqrt(x - lambda));
    const cplx step = r / dfdx;
    if (!(std::abs(step) < 0.1 * std::abs(x))) break;
    x -= step;
    if (x.imag() < 0.0) x.imag(0.0);
  }
  return x;
}

}  // namespace damflow
