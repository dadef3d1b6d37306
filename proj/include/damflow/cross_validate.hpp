#pragma once

// Comparison of the theta pipeline against the direct quadrature route for
// the same polygon.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "damflow/flow.hpp"
#include "damflow/sc_map.hpp"
#include "damflow/sc_oracle.hpp"

namespace damflow {

struct CrossValidationReport {
  double tol = 1e-6;
  double branch_error = 0.0;    // max relative difference of x2..x6
  double lambda_error = 0.0;    // relative difference of lambda
  double interior_error = 0.0;  // max |w_theta - w_quad| / max(H+, H-)
  std::vector<std::string> issues;

  bool branch_ok() const { return branch_error <= tol; }
  bool lambda_ok() const { return lambda_error <= tol; }
  bool interior_ok() const { return interior_error <= tol; }
  bool passed() const { return issues.empty() && branch_ok() && lambda_ok() && interior_ok(); }

  std::string to_string() const {
    std::ostringstream os;
    os.precision(3);
    os << "branch " << branch_error << ", lambda " << lambda_error << ", interior " << interior_error << " (tol " << tol
       << ")";
    for (const auto& s : issues) os << "; " << s;
    return os.str();
  }
};

/// Interior sample points spread over the scale of the preimages.
inline std::vector<cplx> cross_validation_points(const OracleUnknowns& u, int n = 10) {
  const double lo = std::log(0.3), hi = std::log(2.0 * u.x[4]);
  std::vector<cplx> out;
  for (int k = 0; k < n; ++k) {
    const double r = std::exp(lo + (hi - lo) * (k + 0.5) / n);
    const double phi = std::numbers::pi * (0.15 + 0.7 * ((k * 7) % n) / std::max(1, n - 1));
    out.push_back(std::polar(r, phi));
  }
  return out;
}

/// Compare `mp` (theta route) and `u` (quadrature route) for `spec`.
inline CrossValidationReport cross_validate(const PolygonSpec& spec, const MappingParams& mp, const OracleUnknowns& u,
                                            double tol = 1e-6, int samples = 10) {
  CrossValidationReport rep;
  rep.tol = tol;
  try {
    const ScMap map(mp);
    const auto xs = u.branch_points();
    for (int s = 2; s <= 6; ++s)
      rep.branch_error = std::max(rep.branch_error, std::abs(map.branch_x(s) - xs[s - 1]) / xs[s - 1]);
    // With x+ = 0, x1 = 1, x- = oo the cross-ratio of x6 is x6 itself.
    rep.lambda_error = std::abs(lambda_modulus(mp) - xs[5]) / xs[5];
    const double scale = std::max(spec.h_plus, spec.h_minus);
    for (const cplx x : cross_validation_points(u, samples)) {
      const double d = std::abs(map.map_x_to_w(x) - oracle_w(u, x)) / scale;
      rep.interior_error = std::max(rep.interior_error, d);
    }
  } catch (const std::exception& e) {
    rep.issues.emplace_back(std::string("theta route failed: ") + e.what());
  }
  return rep;
}

}  // namespace damflow
