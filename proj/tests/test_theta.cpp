#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "damflow/theta.hpp"

using namespace damflow;

namespace {

const RiemannMatrix kIdentity = RiemannMatrix::from_omega({1.0, 0.0, 1.0});
const RiemannMatrix kCone = RiemannMatrix::from_omega({0.8794, 0.2908, 0.8794});
const RiemannMatrix kSkew = RiemannMatrix::from_omega({0.743251, 0.089781, 0.436364});

// Independent one-dimensional theta sum, used for the product case Pi = i*I.
double jacobi_theta3_1d(double q_exp) {
  double s = 1.0;
  for (int m = 1; m < 40; ++m) s += 2.0 * std::exp(-std::numbers::pi * q_exp * m * m);
  return s;
}

Vec2c random_u(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> re(-1.0, 1.0), im(-0.4, 0.4);
  return {cplx(re(rng), im(rng)), cplx(re(rng), im(rng))};
}

}  // namespace

TEST(Theta, ProductCaseMatchesOneDimensionalSeries) {
  const double one_d = jacobi_theta3_1d(1.0);
  const double closed = std::pow(std::pow(std::numbers::pi, 0.25) / std::tgamma(0.75), 2);
  const cplx v = theta({0.0, 0.0}, kIdentity);
  EXPECT_NEAR(v.real(), one_d * one_d, 1e-14);
  EXPECT_NEAR(v.real(), closed, 1e-13);
  EXPECT_NEAR(v.real(), 1.1803406, 1e-7);
  EXPECT_NEAR(v.imag(), 0.0, 1e-15);
}

TEST(Theta, ProductCaseFactorizesAtShiftedArgument) {
  // theta((a, b), i*diag(w1, w2)) = theta3(a | i w1) * theta3(b | i w2)
  const RiemannMatrix diag = RiemannMatrix::from_omega({0.7, 0.0, 1.3});
  auto t1 = [](cplx z, double w) {
    cplx s = 0.0;
    for (int m = -40; m <= 40; ++m)
      s += std::exp(cplx(0, 2 * std::numbers::pi * m) * z - std::numbers::pi * w * m * m);
    return s;
  };
  const Vec2c u{cplx(0.31, 0.12), cplx(-0.2, -0.3)};
  const cplx expect = t1(u[0], 0.7) * t1(u[1], 1.3);
  EXPECT_LT(std::abs(theta(u, diag) - expect), 1e-12 * std::abs(expect));
}

TEST(Theta, IntegerTranslationInvariance) {
  const Vec2c u{cplx(0.3, -0.7), cplx(0.1, 0.2)};
  for (const auto& pi : {kIdentity, kCone, kSkew}) {
    const cplx a = theta(u, pi);
    const cplx b = theta({u[0] + 1.0, u[1]}, pi);
    EXPECT_LT(std::abs(a - b), 1e-12 * std::max(1.0, std::abs(a)));
  }
}

TEST(Theta, QuasiPeriodicity) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> pick(-2, 2);
  const auto& p = kCone.pi();
  for (int trial = 0; trial < 50; ++trial) {
    const Vec2c u = random_u(rng);
    const int m0 = pick(rng), m1 = pick(rng), n0 = pick(rng), n1 = pick(rng);
    const Vec2c shift{p.a11 * double(m0) + p.a12 * double(m1) + double(n0),
                      p.a12 * double(m0) + p.a22 * double(m1) + double(n1)};
    const cplx lhs = theta({u[0] + shift[0], u[1] + shift[1]}, kCone);
    const cplx mPm = p.a11 * double(m0 * m0) + 2.0 * p.a12 * double(m0 * m1) + p.a22 * double(m1 * m1);
    const cplx factor = std::exp(cplx(0, -std::numbers::pi) * mPm -
                                 cplx(0, 2 * std::numbers::pi) * (double(m0) * u[0] + double(m1) * u[1]));
    const cplx rhs = factor * theta(u, kCone);
    EXPECT_LT(std::abs(lhs - rhs), 1e-10 * std::max(1.0, std::abs(rhs))) << "trial " << trial;
  }
}

TEST(Theta, Evenness) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec2c u = random_u(rng);
    const cplx a = theta(u, kSkew);
    const cplx b = theta({-u[0], -u[1]}, kSkew);
    EXPECT_LT(std::abs(a - b), 1e-13 * std::max(1.0, std::abs(a)));
  }
}

TEST(Theta, ParityRuleForAllIntegerCharacteristics) {
  std::mt19937_64 rng(3);
  int odd = 0;
  for (const auto& c : all_integer_characteristics()) {
    const double sign = char_parity(c) == Parity::even ? 1.0 : -1.0;
    odd += char_parity(c) == Parity::odd;
    for (int trial = 0; trial < 5; ++trial) {
      const Vec2c u = random_u(rng);
      const cplx a = theta_char(c, u, kCone);
      const cplx b = theta_char(c, {-u[0], -u[1]}, kCone);
      EXPECT_LT(std::abs(b - sign * a), 1e-12 * std::max(1.0, std::abs(a))) << c.to_string();
    }
  }
  EXPECT_EQ(odd, 6);
}

TEST(Theta, OddConstantsVanishEvenConstantsDoNot) {
  for (const auto& pi : {kCone, kSkew}) {
    for (const auto& c : all_integer_characteristics()) {
      const double v = std::abs(theta_char(c, {0.0, 0.0}, pi));
      if (char_parity(c) == Parity::odd)
        EXPECT_LT(v, 1e-12) << c.to_string();
      else
        EXPECT_GT(v, 1e-3) << c.to_string();
    }
  }
}

TEST(Theta, DirectAndPrefactorFormsAgree) {
  std::mt19937_64 rng(5);
  for (const auto& c : all_integer_characteristics()) {
    const Vec2c u = random_u(rng);
    const cplx a = theta_char(c, u, kSkew);
    const cplx b = theta_char_shifted(c, u, kSkew);
    EXPECT_LT(std::abs(a - b), 1e-11 * std::max(1.0, std::abs(a))) << c.to_string();
  }
  // Non-integer characteristic as well.
  const ThetaCharacteristic frac{{0.3, -0.15}, {0.25, 0.6}};
  const Vec2c u{cplx(0.2, 0.1), cplx(-0.4, 0.05)};
  EXPECT_LT(std::abs(theta_char(frac, u, kCone) - theta_char_shifted(frac, u, kCone)), 1e-11);
}

TEST(Theta, ZeroCharacteristicIsPlainTheta) {
  const Vec2c u{cplx(0.17, 0.05), cplx(0.33, -0.11)};
  EXPECT_EQ(theta_char(ThetaCharacteristic{}, u, kSkew), theta(u, kSkew));
}

TEST(Theta, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(19);
  const double h = 1e-6;
  for (const auto& c : all_integer_characteristics()) {
    const Vec2c u = random_u(rng);
    const Vec2c g = theta_grad(c, u, kCone);
    for (int k = 0; k < 2; ++k) {
      Vec2c up = u, dn = u;
      up[k] += h;
      dn[k] -= h;
      const cplx fd = (theta_char(c, up, kCone) - theta_char(c, dn, kCone)) / (2.0 * h);
      EXPECT_LT(std::abs(fd - g[k]), 1e-6 * std::max(1.0, std::abs(g[k]))) << c.to_string();
    }
  }
}

TEST(Theta, EvenGradientVanishesAtOriginOddDoesNot) {
  for (const auto& c : all_integer_characteristics()) {
    const Vec2c g = theta_grad(c, {0.0, 0.0}, kCone);
    const double n = std::abs(g[0]) + std::abs(g[1]);
    if (char_parity(c) == Parity::even)
      EXPECT_LT(n, 1e-12);
    else
      EXPECT_GT(n, 1e-3);
  }
}

TEST(Theta, JetScalarMatchesComplexScalar) {
  const SymMat2<Jet<3>> pj{Jet<3>::variable(0.8794, 0) * cplx(0, 1), Jet<3>::variable(0.2908, 1) * cplx(0, 1),
                           Jet<3>::variable(0.8794, 2) * cplx(0, 1)};
  const auto c = char_from_points({3, 5});
  const Vec2<Jet<3>> u{Jet<3>(cplx(0.2, 0.05)), Jet<3>(cplx(0.1, -0.02))};
  const auto r = theta_series<Jet<3>>(c, u, pj, {}, true);
  const cplx direct = theta_char(c, {cplx(0.2, 0.05), cplx(0.1, -0.02)}, kCone);
  EXPECT_LT(std::abs(r.value.v - direct), 1e-14);
  // d theta / d Omega_11 against a finite difference.
  const double h = 1e-6;
  const auto plus = RiemannMatrix::from_omega({0.8794 + h, 0.2908, 0.8794});
  const auto minus = RiemannMatrix::from_omega({0.8794 - h, 0.2908, 0.8794});
  const Vec2c uc{cplx(0.2, 0.05), cplx(0.1, -0.02)};
  const cplx fd = (theta_char(c, uc, plus) - theta_char(c, uc, minus)) / (2 * h);
  EXPECT_LT(std::abs(fd - r.value.d[0]), 1e-7);
}

TEST(Theta, HeatEquationLinksOmegaAndUDerivatives) {
  // d theta / d Pi_11 = (1 / (4 pi i)) d^2 theta / du_1^2, checked through the jet.
  const auto c = char_from_points({3});
  const Vec2c u{cplx(0.13, 0.02), cplx(0.31, 0.07)};
  const SymMat2<Jet<1>> pj{Jet<1>::variable(0.8794, 0) * cplx(0, 1), Jet<1>(cplx(0, 0.2908)),
                           Jet<1>(cplx(0, 0.8794))};
  const auto r = theta_series<Jet<1>>(c, {Jet<1>(u[0]), Jet<1>(u[1])}, pj, {}, false);
  const double h = 1e-4;
  const cplx d2 = (theta_char(c, {u[0] + h, u[1]}, kCone) - 2.0 * theta_char(c, u, kCone) +
                   theta_char(c, {u[0] - h, u[1]}, kCone)) /
                  (h * h);
  // d/dOmega_11 = i d/dPi_11
  const cplx expect = cplx(0, 1) * d2 / cplx(0, 4 * std::numbers::pi);
  EXPECT_LT(std::abs(r.value.d[0] - expect), 1e-5 * std::abs(expect));
}

TEST(Characteristic, TableAndSums) {
  const auto c35 = char_from_points({3, 5});
  EXPECT_EQ(c35.rows(), (std::array<std::array<int, 2>, 2>{{{1, 0}, {1, 1}}}));
  EXPECT_EQ(char_parity(c35), Parity::odd);
  EXPECT_EQ(char_from_points({2}).rows(), (std::array<std::array<int, 2>, 2>{{{1, 0}, {0, 0}}}));
  EXPECT_EQ(char_from_points({}), ThetaCharacteristic{});
  EXPECT_EQ(char_from_points({1, 3, 5}), c35);
  EXPECT_EQ(char_parity(ThetaCharacteristic{}), Parity::even);
  EXPECT_EQ(char_parity(branch_characteristic(4)), Parity::even);
  EXPECT_EQ(char_parity(char_from_points({3})), Parity::odd);
  EXPECT_EQ(char_parity(char_from_points({5})), Parity::odd);
  // Sum of all six branch characteristics is zero.
  EXPECT_EQ(char_from_points({1, 2, 3, 4, 5, 6}), ThetaCharacteristic{});
  EXPECT_THROW(char_from_points({7}), std::invalid_argument);
  EXPECT_THROW(ThetaCharacteristic::from_rows({2, 0}, {0, 0}), std::invalid_argument);
}

TEST(Characteristic, OddOnesAreSingleAndSixPointSums) {
  // The six odd characteristics are the six branch points shifted by [35].
  int found = 0;
  for (int s = 1; s <= 6; ++s)
    found += char_parity(char_from_points({3, 5}) + branch_characteristic(s)) == Parity::odd;
  EXPECT_EQ(found, 6);
}

TEST(RiemannMatrixValidation, RejectsBadInput) {
  EXPECT_THROW(RiemannMatrix::from_omega({1.0, 2.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(RiemannMatrix(cplx(0, 1), cplx(0, 0.1), cplx(0, 0.2), cplx(0, 1)), std::invalid_argument);
  EXPECT_THROW(RiemannMatrix::from_omega({-1.0, 0.0, 1.0}), std::invalid_argument);
}

TEST(SeriesControlValidation, ReportsUnmetTolerance) {
  const auto thin = RiemannMatrix::from_omega({0.01, 0.0, 1.0});
  SeriesControl ctl;
  ctl.max_radius = 5;
  EXPECT_THROW(theta({0.0, 0.0}, thin, ctl), SeriesError);
  EXPECT_THROW((SeriesControl{0.0, 3}.validate()), std::invalid_argument);
}
