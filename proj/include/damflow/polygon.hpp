#pragma once

// Octagonal dam cross-section.
//
// Vertices w1..w6 of the dam profile are linked by signed sides
//   w_{s+1} - w_s = i^s H_s,   w1 = 0,
// so sides alternate vertical and horizontal. Two channels of widths H+ and
// H- run to infinity on the right and on the left, bounded below by the
// rock bed Y = -H+. Admissibility: H1, H4 < 0 < H2, H3, H5,
// H+ + H1 - H3 + H5 = H-, and the isthmus inequalities H+ + H1 > 0,
// H+ + H1 - H3 > 0.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "damflow/jet.hpp"

namespace damflow {

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ConstraintCheck {
  std::string name;
  std::string rule;
  bool passed = true;
  double margin = 0.0;
};

struct PolygonSpec {
  std::array<double, 5> H{-1.0, 1.0, 1.0, -1.0, 2.0};
  double h_plus = 3.0;
  double h_minus = 3.0;

  /// Spec with H- fixed by the closure relation.
  static PolygonSpec closed(std::array<double, 5> h, double h_plus) {
    return {h, h_plus, h_plus + h[0] - h[2] + h[4]};
  }

  /// Every admissibility rule with its slack (positive when satisfied).
  std::vector<ConstraintCheck> checks(double closure_tol = 1e-9) const {
    std::vector<ConstraintCheck> out;
    auto add = [&](std::string name, std::string rule, double margin) {
      out.push_back({std::move(name), std::move(rule), margin > 0.0, margin});
    };
    const double scale = std::max({std::abs(h_plus), std::abs(h_minus), 1e-300});
    for (double v : H)
      if (!std::isfinite(v)) throw GeometryError("PolygonSpec: non-finite side length");
    if (!std::isfinite(h_plus) || !std::isfinite(h_minus)) throw GeometryError("PolygonSpec: non-finite width");
    add("sign_H1", "H1 < 0", -H[0]);
    add("sign_H2", "H2 > 0", H[1]);
    add("sign_H3", "H3 > 0", H[2]);
    add("sign_H4", "H4 < 0", -H[3]);
    add("sign_H5", "H5 > 0", H[4]);
    add("width_plus", "H+ > 0", h_plus);
    add("width_minus", "H- > 0", h_minus);
    const double closure = h_plus + H[0] - H[2] + H[4] - h_minus;
    add("closure", "H+ + H1 - H3 + H5 = H-", closure_tol * scale - std::abs(closure));
    add("isthmus_first", "H+ + H1 > 0", h_plus + H[0]);
    add("isthmus_second", "H+ + H1 - H3 > 0", h_plus + H[0] - H[2]);
    return out;
  }

  bool is_admissible() const {
    const auto c = checks();
    return std::all_of(c.begin(), c.end(), [](const ConstraintCheck& k) { return k.passed; });
  }

  /// Throws GeometryError naming the first violated rule.
  void validate() const {
    for (const auto& c : checks())
      if (!c.passed) throw GeometryError("PolygonSpec violates " + c.name + ": " + c.rule);
  }

  /// Relative clearance of the narrower isthmus, (H+ + H1 - H3) / H+.
  double isthmus_ratio() const { return (h_plus + H[0] - H[2]) / h_plus; }

  PolygonSpec scaled(double s) const {
    PolygonSpec p = *this;
    for (double& v : p.H) v *= s;
    p.h_plus *= s;
    p.h_minus *= s;
    return p;
  }

  /// Linear interpolation (1 - t) a + t b.
  static PolygonSpec lerp(const PolygonSpec& a, const PolygonSpec& b, double t) {
    PolygonSpec p;
    for (int s = 0; s < 5; ++s) p.H[s] = (1.0 - t) * a.H[s] + t * b.H[s];
    p.h_plus = (1.0 - t) * a.h_plus + t * b.h_plus;
    p.h_minus = (1.0 - t) * a.h_minus + t * b.h_minus;
    return p;
  }

  std::array<double, 7> as_vector() const { return {H[0], H[1], H[2], H[3], H[4], h_plus, h_minus}; }

  /// Vertices w1..w6.
  std::array<cplx, 6> vertices() const {
    std::array<cplx, 6> w{};
    cplx rot(0.0, 1.0);
    for (int s = 0; s < 5; ++s) {
      w[s + 1] = w[s] + rot * H[s];
      rot *= cplx(0.0, 1.0);
    }
    return w;
  }

  double bed_level() const { return -h_plus; }

  /// Height of the upper boundary above abscissa X; on a vertical side the
  /// lower of the two adjacent levels.
  double top_at(double X) const {
    const auto w = vertices();
    const std::array<double, 3> edge{w[0].real(), w[2].real(), w[4].real()};
    const std::array<double, 4> level{0.0, w[1].imag(), w[3].imag(), w[5].imag()};
    for (int k = 0; k < 3; ++k) {
      if (X > edge[k]) return level[k];
      if (X == edge[k]) return std::min(level[k], level[k + 1]);
    }
    return level[3];
  }

  /// Open-domain membership test.
  bool contains(cplx z) const { return z.imag() > bed_level() && z.imag() < top_at(z.real()); }

  /// Distance from z (inside) to the boundary, channels treated as infinite.
  double boundary_distance(cplx z) const {
    const auto w = vertices();
    double d = z.imag() - bed_level();
    auto seg = [&](cplx a, cplx b) {
      const cplx ab = b - a;
      const double t = std::clamp(std::real((z - a) * std::conj(ab)) / std::norm(ab), 0.0, 1.0);
      return std::abs(z - (a + t * ab));
    };
    for (int s = 0; s < 5; ++s) d = std::min(d, seg(w[s], w[s + 1]));
    const double far = 1e6 * (h_plus + h_minus + 1.0);
    d = std::min(d, seg(w[0], cplx(far, 0.0)));
    d = std::min(d, seg(w[5], cplx(-far, w[5].imag())));
    return d;
  }

  std::string to_string() const {
    std::ostringstream os;
    os.precision(17);
    os << "H=(" << H[0] << ", " << H[1] << ", " << H[2] << ", " << H[3] << ", " << H[4] << "), H+=" << h_plus
       << ", H-=" << h_minus;
    return os.str();
  }
};

}  // namespace damflow
