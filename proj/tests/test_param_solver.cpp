#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"

using namespace damflow;
using fixtures::p_test;

namespace {

double param_distance(const MappingParams& a, const MappingParams& b) {
  const auto pa = detail::pack(a), pb = detail::pack(b);
  double d = 0.0;
  for (int k = 0; k < 7; ++k) d = std::max(d, std::abs(pa[k] - pb[k]));
  return d;
}

OracleUnknowns random_unknowns(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> gap(0.3, 3.0), amp(0.5, 2.0);
  OracleUnknowns u;
  double prev = 1.0;
  for (double& v : u.x) v = prev += gap(rng);
  u.A = amp(rng);
  return u;
}

}  // namespace

TEST(ParamSolver, AnchorIsConsistent) {
  const auto [spec, mp] = bootstrap_anchor();
  EXPECT_LT(residual(mp, spec).norm(), 1e-8);
  EXPECT_TRUE(mp.in_lemma_cone());
  EXPECT_TRUE(mp.lemma_ordering());
  const ScMap map(mp);
  for (const Vec2d& u : {mp.u_plus, mp.u_minus})
    EXPECT_LT(std::abs(map.theta35({cplx(u[0]), cplx(u[1])}).value), 1e-12);
  // Regression lock on the period-row signs: every row vanishes at the
  // forward construction, so a sign flip in any of them shows up here.
  const auto r = residual(mp, spec);
  for (int k = 0; k < 9; ++k) EXPECT_LT(std::abs(r.r[k]), 1e-10) << ResidualVector::names[k];
}

TEST(ParamSolver, ForwardConstructionIsRecovered) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 4; ++trial) {
    const OracleUnknowns u = random_unknowns(rng);
    const auto [spec, truth] = anchor_from_unknowns(u);
    if (spec.isthmus_ratio() < 0.05) continue;
    const MappingParams got = solve_params(spec);
    EXPECT_LT(param_distance(got, truth), 1e-8) << spec.to_string();
  }
}

TEST(ParamSolver, SolvesTestPolygon) {
  const SolveReport rep = solve_params_report(p_test());
  ASSERT_TRUE(rep.converged) << rep.message;
  EXPECT_LT(rep.residual_norm, 1e-10);
  const MappingParams& mp = rep.params;
  EXPECT_TRUE(mp.in_lemma_cone());
  EXPECT_TRUE(mp.lemma_ordering());
  EXPECT_EQ(mp.c1, -2.0);
  EXPECT_EQ(mp.c2, -2.0);
  EXPECT_LT(residual(mp, p_test()).norm(), 1e-10);
}

TEST(ParamSolver, LinearRowsAreExact) {
  MappingParams mp = fixtures::p_test_params();
  const auto r = residual(mp, p_test());
  EXPECT_EQ(r.r[5], 0.0);
  EXPECT_EQ(r.r[6], 0.0);
  mp.c1 = 0.37;
  mp.c2 = -1.25;
  const auto q = residual(mp, p_test());
  EXPECT_EQ(q.r[5], -2.0 * 1.0 - 0.37);
  EXPECT_EQ(q.r[6], 2.0 * -1.0 + 1.25);
}

TEST(ParamSolver, Homogeneity) {
  const MappingParams& a = fixtures::p_test_params();
  const MappingParams b = solve_params(p_test().scaled(2.0));
  EXPECT_LT(param_distance(a, b), 1e-10);
  EXPECT_EQ(b.c1, 2.0 * a.c1);
  EXPECT_EQ(b.c2, 2.0 * a.c2);
}

TEST(ParamSolver, WarmStartIsCheap) {
  const PolygonSpec nearby = PolygonSpec::closed({-1.0, 1.0, 1.1, -1.0, 2.0}, 3.0);
  const SolveReport rep = solve_params_report(nearby, {}, fixtures::p_test_params());
  ASSERT_TRUE(rep.converged) << rep.message;
  EXPECT_LE(rep.newton_steps, 5);
  EXPECT_LT(param_distance(rep.params, solve_params(nearby)), 1e-9);
}

TEST(ParamSolver, JacobianMatchesFiniteDifferences) {
  const auto [spec, mp] = bootstrap_anchor();
  const PolygonSpec unit = spec.scaled(1.0 / spec.h_minus);
  const auto packed = detail::pack(mp);
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(packed.data(), 7);
  Eigen::MatrixXd jac;
  detail::core_eval(x, unit, {1e-15, 40}, &jac);
  const Eigen::MatrixXd fd =
      fd_jacobian([&](const Eigen::VectorXd& v) { return detail::core_eval(v, unit, {1e-15, 40}, nullptr); }, x, 1e-5);
  const double big = jac.cwiseAbs().maxCoeff();
  for (int i = 0; i < 7; ++i)
    for (int k = 0; k < 7; ++k)
      EXPECT_NEAR(jac(i, k), fd(i, k), 1e-5 * std::max(std::abs(jac(i, k)), 1e-3 * big)) << i << "," << k;
}

TEST(ParamSolver, ResidualGrowsLinearlyUnderPerturbation) {
  const MappingParams& mp = fixtures::p_test_params();
  const PolygonSpec unit = p_test().scaled(1.0 / 3.0);
  const auto packed = detail::pack(mp);
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(packed.data(), 7);
  Eigen::MatrixXd jac;
  detail::core_eval(x, unit, {1e-15, 40}, &jac);
  // Rows scale with H, so compare in the unit normalization.
  for (double h : {1e-6, 2e-6}) {
    MappingParams moved = mp;
    moved.omega.a12 += h;
    const double grow = residual(moved, p_test()).norm() / 3.0;
    EXPECT_NEAR(grow / h, jac.col(1).norm(), 1e-3 * jac.col(1).norm());
  }
}

TEST(ParamSolver, ContinuationPath) {
  const MappingParams& start = fixtures::p_test_params();
  const auto same = continuation_path(p_test(), p_test(), {}, start);
  ASSERT_EQ(same.size(), 1u);
  EXPECT_EQ(param_distance(same[0], start), 0.0);

  const PolygonSpec deeper = PolygonSpec::closed({-1.0, 1.0, 1.0, -1.0, 3.0}, 3.0);
  EXPECT_DOUBLE_EQ(deeper.h_minus, 4.0);
  const auto path = continuation_path(p_test(), deeper, {}, start);
  ASSERT_GE(path.size(), 2u);
  for (const auto& mp : path) {
    EXPECT_TRUE(mp.in_lemma_cone());
    EXPECT_TRUE(mp.lemma_ordering());
    EXPECT_LT(residual(mp, mp.polygon).norm() / mp.polygon.h_minus, 1e-9);
  }
  EXPECT_LT(param_distance(path.back(), solve_params(deeper)), 1e-9);
  // Each unknown drifts monotonically along the path.
  std::vector<std::array<double, 7>> seq{detail::pack(start)};
  for (const auto& mp : path) seq.push_back(detail::pack(mp));
  for (int k = 0; k < 7; ++k) {
    const double sign = seq.back()[k] - seq.front()[k];
    for (std::size_t j = 1; j < seq.size(); ++j) EXPECT_GE((seq[j][k] - seq[j - 1][k]) * sign, 0.0) << k << " step " << j;
  }
}

TEST(ParamSolver, DegenerateTargetsAreRejected) {
  // H+ + H1 - H3 = 0.
  const PolygonSpec flat = PolygonSpec::closed({-1.0, 1.0, 2.0, -1.0, 2.0}, 3.0);
  EXPECT_THROW(solve_params(flat), GeometryError);
  EXPECT_THROW(continuation_path(p_test(), flat), GeometryError);
  // Admissible, but inside the guard band.
  const PolygonSpec thin = PolygonSpec::closed({-1.0, 1.0, 1.9, -1.0, 2.0}, 3.0);
  ASSERT_TRUE(thin.is_admissible());
  EXPECT_THROW(solve_params(thin), SolverError);
}

TEST(ParamSolver, ExhaustedContinuationReportsLastGoodPoint) {
  SolverConfig cfg;
  cfg.max_newton = 1;
  cfg.max_backtracks = 2;
  const SolveReport rep = solve_params_report(p_test(), cfg);
  EXPECT_FALSE(rep.converged);
  EXPECT_NE(rep.message.find("exhausted"), std::string::npos);
  EXPECT_NO_THROW(rep.params.validate());
  EXPECT_THROW(solve_params(p_test(), cfg), SolverError);
}

TEST(ParamSolver, UniquenessProbe) {
  std::mt19937_64 rng(2024);
  const MappingParams& other = fixtures::p_test_params();
  int solved = 0;
  while (solved < 20) {
    const auto [spec, truth] = anchor_from_unknowns(random_unknowns(rng));
    if (spec.isthmus_ratio() < 0.05) continue;
    const MappingParams cold = solve_params(spec);
    const MappingParams from_test = solve_params(spec, {}, other);
    const MappingParams from_truth = solve_params(spec, {}, truth);
    EXPECT_LT(param_distance(cold, from_test), 1e-8) << spec.to_string();
    EXPECT_LT(param_distance(cold, from_truth), 1e-8) << spec.to_string();
    EXPECT_LT(param_distance(cold, truth), 1e-8) << spec.to_string();
    ++solved;
  }
}

TEST(ParamSolver, ConfigValidation) {
  SolverConfig cfg;
  cfg.tol = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.continuation_steps = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}
