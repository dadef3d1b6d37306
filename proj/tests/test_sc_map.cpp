#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <thread>
#include <vector>

#include "damflow/sc_oracle.hpp"
#include "fixtures.hpp"

using namespace damflow;
using fixtures::anchor_map;
using fixtures::p_test_map;

namespace {

Vec2c cvec(const Vec2d& a) { return {cplx(a[0]), cplx(a[1])}; }

// Distance of w from the segment [a, b].
double segment_distance(cplx w, cplx a, cplx b) {
  const cplx d = b - a;
  const double t = std::clamp(((w - a) * std::conj(d)).real() / std::norm(d), 0.0, 1.0);
  return std::abs(w - (a + t * d));
}

// Preimages and prefactor of a solved map, for the direct SC density.
OracleUnknowns unknowns_of(const ScMap& map) {
  OracleUnknowns u;
  for (int s = 2; s <= 6; ++s) u.x[s - 2] = map.branch_x(s);
  u.A = map.params().polygon.h_minus / std::numbers::pi;
  return u;
}

std::vector<cplx> random_interior(const PolygonSpec& P, int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  const double wmax = 2.0 * std::max(P.h_plus, P.h_minus);
  std::uniform_real_distribution<double> re(-wmax - 3.0, wmax), im(P.bed_level(), 0.0);
  std::vector<cplx> out;
  while (static_cast<int>(out.size()) < n) {
    const cplx w(re(rng), im(rng));
    if (P.contains(w) && P.boundary_distance(w) > 1e-3) out.push_back(w);
  }
  return out;
}

}  // namespace

TEST(ScMap, VerticesAndNormalizations) {
  for (const ScMap* map : {&anchor_map(), &p_test_map()}) {
    const auto& mp = map->params();
    const auto w = mp.polygon.vertices();
    for (int s = 1; s <= 6; ++s) {
      EXPECT_LT(std::abs(map->w_of_u(map->vertex_u(s)) - w[s - 1]), 1e-9) << s;
      EXPECT_LT(std::abs(map->theta35(map->vertex_u(s)).value), 1e-12) << s;
    }
    EXPECT_EQ(map->x_of_u({0.0, 0.0}), cplx(1.0));
    EXPECT_LT(std::abs(map->x_of_u(cvec(mp.u_plus))), 1e-10);
    EXPECT_GT(std::abs(map->x_of_u(cvec(mp.u_minus))), 1e10);
    EXPECT_LT(std::abs(map->map_x_to_w(1.0)), 1e-12);
  }
}

TEST(ScMap, AnchorBranchPointsAreTheChosenPreimages) {
  // The anchor was built from x_s = s with x+ = 0, x- = oo, so the identity
  // is the normalizing Mobius map.
  for (int s = 1; s <= 6; ++s) EXPECT_NEAR(anchor_map().branch_x(s), s, 1e-10 * s) << s;
}

TEST(ScMap, ForwardMapMatchesDirectQuadrature) {
  const ScMap& map = anchor_map();
  const OracleUnknowns ou;
  for (cplx x : {cplx(0.5, 0.5), cplx(2.5, 0.1), cplx(3.5, 1.0), cplx(10.0, 4.0), cplx(-2.0, 0.2), cplx(100.0, 30.0)})
    EXPECT_LT(std::abs(map.map_x_to_w(x) - oracle_w(ou, x)), 1e-9) << x;
}

TEST(ScMap, RealSegmentsMapToSides) {
  const ScMap& map = p_test_map();
  const PolygonSpec& P = map.params().polygon;
  const auto w = P.vertices();
  for (int s = 1; s <= 5; ++s) {
    const double a = map.branch_x(s), b = map.branch_x(s + 1);
    for (double f : {0.1, 0.5, 0.9}) {
      const double x = a + f * (b - a);
      EXPECT_LT(segment_distance(map.map_x_to_w(x), w[s - 1], w[s]), 1e-8) << "side " << s << " at " << x;
    }
  }
  // Side images have the prescribed lengths.
  for (int s = 1; s <= 5; ++s) EXPECT_NEAR(std::abs(w[s] - w[s - 1]), std::abs(P.H[s - 1]), 1e-15);
  // (x6, oo) is the upstream water bottom, (0, 1) the downstream one,
  // (-oo, 0) the rock bed.
  const cplx up = map.map_x_to_w(2.0 * map.branch_x(6));
  EXPECT_NEAR(up.imag(), 0.0, 1e-8);
  EXPECT_LT(up.real(), w[5].real());
  const cplx down = map.map_x_to_w(0.5);
  EXPECT_NEAR(down.imag(), 0.0, 1e-8);
  EXPECT_GT(down.real(), 0.0);
  EXPECT_NEAR(map.map_x_to_w(-1.0).imag(), P.bed_level(), 1e-8);
}

TEST(ScMap, LoopAroundPoleAddsChannelWidth) {
  for (const ScMap* map : {&anchor_map(), &p_test_map()}) {
    const auto& mp = map->params();
    const Vec2c up = cvec(mp.u_plus);
    const Vec2c g = map->theta35(up).grad;
    const Vec2c n{std::conj(g[0]), std::conj(g[1])};
    const double scale = 1e-3 / std::hypot(std::abs(n[0]), std::abs(n[1]));
    const int steps = 64;
    cplx total = 0.0;
    Vec2c prev{up[0] + scale * n[0], up[1] + scale * n[1]};
    for (int k = 1; k <= steps; ++k) {
      const cplx e = std::polar(scale, 2.0 * std::numbers::pi * k / steps);
      const Vec2c cur{up[0] + e * n[0], up[1] + e * n[1]};
      total += map->w_increment(prev, cur);
      prev = cur;
    }
    EXPECT_NEAR(std::abs(total), 2.0 * mp.polygon.h_plus, 1e-9);
    EXPECT_NEAR(std::abs(total.real()), 0.0, 1e-9);
  }
}

TEST(ScMap, ChannelAsymptotics) {
  const ScMap& map = p_test_map();
  const PolygonSpec& P = map.params().polygon;
  // Semicircle around x+ crosses the right channel: Im w spans H+.
  for (double r : {1e-2, 1e-4}) {
    const cplx a = map.map_x_to_w(r), b = map.map_x_to_w(-r);
    EXPECT_NEAR(a.imag() - b.imag(), P.h_plus, 1e-8);
  }
  // w ~ -(H+/pi) log x near 0 and w ~ -(H-/pi) log x near oo.
  const double ln2 = std::log(2.0);
  const cplx near0 = map.map_x_to_w(cplx(0.0, 5e-7)) - map.map_x_to_w(cplx(0.0, 1e-6));
  EXPECT_NEAR(near0.real(), P.h_plus / std::numbers::pi * ln2, 1e-4);
  const cplx far = map.map_x_to_w(cplx(0.0, 2e9)) - map.map_x_to_w(cplx(0.0, 1e9));
  EXPECT_NEAR(far.real(), -P.h_minus / std::numbers::pi * ln2, 1e-4);
  EXPECT_GT(map.map_x_to_w(cplx(0.0, 1e-6)).real(), 5.0);
  EXPECT_LT(map.map_x_to_w(cplx(0.0, 1e9)).real(), -10.0);
}

TEST(ScMap, CauchyRiemannAndDensity) {
  for (const ScMap* map : {&anchor_map(), &p_test_map()}) {
    const OracleUnknowns ou = unknowns_of(*map);
    for (cplx x : {cplx(0.7, 0.4), cplx(3.0, 2.0), cplx(-1.0, 5.0), cplx(40.0, 20.0)}) {
      const double h = 1e-4 * std::abs(x);
      const cplx dx = (map->map_x_to_w(x + h) - map->map_x_to_w(x - h)) / (2.0 * h);
      const cplx dy = (map->map_x_to_w(x + cplx(0, h)) - map->map_x_to_w(x - cplx(0, h))) / (2.0 * h);
      const cplx expect = detail::sc_density(ou, x, 0.0);
      EXPECT_LT(std::abs(dx - dy / cplx(0, 1)), 1e-6 * std::abs(dx)) << x;
      EXPECT_LT(std::abs(dx - expect), 1e-6 * std::abs(expect)) << x;
    }
  }
}

TEST(ScMap, SpecialPreimages) {
  const ScMap& map = p_test_map();
  const auto& mp = map.params();
  const JacobianPoint one = map.u_of_x(1.0);
  EXPECT_LT(std::abs(one.u[0]) + std::abs(one.u[1]), 1e-12);
  const JacobianPoint p6 = map.u_of_x(map.branch_x(6));
  EXPECT_LT(std::abs(p6.u[0] - map.vertex_u(6)[0]) + std::abs(p6.u[1] - map.vertex_u(6)[1]), 1e-12);
  // Close to x+ the preimage approaches u+.
  const JacobianPoint near = map.u_of_x(cplx(1e-6, 1e-6));
  EXPECT_LT(std::abs(near.u[0] - mp.u_plus[0]) + std::abs(near.u[1] - mp.u_plus[1]), 1e-3);
  EXPECT_LT(std::abs(map.x_of_u(near.u) - cplx(1e-6, 1e-6)), 1e-12);
}

TEST(ScMap, RandomInteriorPointsLandInBlock) {
  const ScMap& map = p_test_map();
  const PolygonSpec& P = map.params().polygon;
  const auto pts = random_interior(P, 100, 17);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const JacobianPoint p = map.u_of_w(pts[k]);
    EXPECT_TRUE(p.in_block()) << pts[k] << " violation " << p.block_violation();
    EXPECT_LT(std::abs(map.theta35(p.u).value), 1e-10);
    if (k % 10 == 0) {
      EXPECT_LT(std::abs(map.map_x_to_w(map.x_of_u(p.u)) - pts[k]), 1e-8) << pts[k];
    }
  }
}

TEST(ScMap, NearVertexPreimageIsNearHalfPeriod) {
  const ScMap& map = p_test_map();
  const auto w = map.params().polygon.vertices();
  const cplx probe = w[1] + cplx(1e-4, -1e-4);  // inside the corner at w2
  const JacobianPoint p = map.u_of_w(probe);
  const Vec2c& h = map.vertex_u(2);
  EXPECT_LT(std::abs(p.u[0] - h[0]) + std::abs(p.u[1] - h[1]), 0.05);
  EXPECT_LT(std::abs(map.x_of_u(p.u) - map.branch_x(2)), 1e-2 * map.branch_x(2));
}

TEST(ScMap, RoundTrip) {
  for (const ScMap* map : {&anchor_map(), &p_test_map()}) {
    for (cplx x : {cplx(0.3, 0.2), cplx(1.5, 0.01), cplx(4.0, 3.0), cplx(-20.0, 1.0), cplx(1000.0, 500.0),
                   cplx(map->branch_x(5), 1.0), cplx(0.0, map->branch_x(6))}) {
      const cplx w = map->map_x_to_w(x);
      EXPECT_LT(std::abs(map->map_w_to_x(w) - x), 1e-8 * std::max(1.0, std::abs(x))) << x;
    }
  }
}

TEST(ScMap, InjectiveOnGrid) {
  const ScMap& map = p_test_map();
  const PolygonSpec& P = map.params().polygon;
  std::vector<cplx> img;
  for (int i = 0; i < 20; ++i) {
    const double r = std::pow(10.0, -2.0 + 7.0 * (i + 0.5) / 20.0);
    for (int j = 0; j < 20; ++j) {
      const double phi = std::numbers::pi * (j + 0.5) / 20.0;
      const cplx w = map.map_x_to_w(std::polar(r, phi));
      EXPECT_TRUE(P.contains(w)) << w;
      img.push_back(w);
    }
  }
  double closest = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < img.size(); ++a)
    for (std::size_t b = a + 1; b < img.size(); ++b) closest = std::min(closest, std::abs(img[a] - img[b]));
  EXPECT_GT(closest, 1e-6);
}

TEST(ScMap, ConcurrentCallsAgree) {
  const ScMap& map = anchor_map();
  const std::vector<cplx> xs{cplx(0.5, 0.5), cplx(3.5, 1.0), cplx(10.0, 4.0), cplx(-2.0, 0.2)};
  std::vector<cplx> serial;
  for (cplx x : xs) serial.push_back(map.map_x_to_w(x));
  std::vector<cplx> parallel(xs.size());
  std::vector<std::thread> pool;
  for (std::size_t k = 0; k < xs.size(); ++k) pool.emplace_back([&, k] { parallel[k] = map.map_x_to_w(xs[k]); });
  for (auto& t : pool) t.join();
  for (std::size_t k = 0; k < xs.size(); ++k) EXPECT_EQ(parallel[k], serial[k]);
}

TEST(ScMap, RejectsOutsideAndPoles) {
  const ScMap& map = p_test_map();
  EXPECT_THROW(map.u_of_w(cplx(-0.5, -0.5)), std::domain_error);
  EXPECT_THROW(map.u_of_w(cplx(1.0, 0.5)), std::domain_error);
  EXPECT_THROW(map.map_x_to_w(0.0), std::domain_error);
  EXPECT_THROW(map.map_x_to_w(cplx(std::numeric_limits<double>::infinity(), 0.0)), std::domain_error);
  MappingParams bad = map.params();
  bad.omega = {1.0, 2.0, 1.0};
  EXPECT_THROW(ScMap{bad}, std::invalid_argument);
}
