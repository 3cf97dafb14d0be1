#include <gtest/gtest.h>

#include "mpse/rng.hpp"
#include "mpse/sdp_kernel.hpp"
#include "oracles.hpp"

using namespace mpse;

namespace {

// single symmetric block "X" with the cone constraint X >= margin*I and
// a unit-weight quadratic pull toward `target`
AffinePsdProblem projection_problem(const Matrix& target, double margin = 0.0) {
  AffinePsdProblem p;
  const auto n = target.rows();
  p.blocks.push_back({"X", n, n, true});
  p.targets.push_back({"X", target, 1.0});
  AffineConstraint c;
  c.name = "cone";
  c.size = n;
  c.margin = margin;
  c.expr = [](const BlockValues& v) { return v.at("X"); };
  p.constraints.push_back(std::move(c));
  return p;
}

Matrix random_symmetric(Eigen::Index n, GaussianStream& g) {
  Matrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = g.normal();
  return symmetrize(m);
}

}  // namespace

TEST(PsdKernel, FeasibleTargetIsReturnedUnchanged) {
  Matrix t = 2.0 * Matrix::Identity(3, 3);
  t(0, 1) = t(1, 0) = 0.3;
  PsdKernel kernel(projection_problem(t));
  BlockValues warm{{"X", t}};
  KernelSolution sol = kernel.solve(KernelOptions{}, &warm);
  ASSERT_TRUE(sol.converged);
  EXPECT_LT((sol.values.at("X") - t).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(PsdKernel, ClampsIndefiniteDiagonalTarget) {
  Matrix t = Matrix::Zero(2, 2);
  t.diagonal() << 2.0, -1.0;
  PsdKernel kernel(projection_problem(t));
  KernelSolution sol = kernel.solve(KernelOptions{});
  ASSERT_TRUE(sol.converged);
  EXPECT_NEAR(sol.values.at("X")(0, 0), 2.0, 1e-5);
  EXPECT_NEAR(sol.values.at("X")(1, 1), 0.0, 1e-4);
}

TEST(PsdKernel, MatchesJacobiProjectionOracle) {
  GaussianStream g(101);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix t = random_symmetric(4, g);
    PsdKernel kernel(projection_problem(t));
    KernelSolution sol = kernel.solve(KernelOptions{});
    ASSERT_TRUE(sol.converged);
    Matrix expect = oracles::psd_project(t);
    EXPECT_LT((sol.values.at("X") - expect).cwiseAbs().maxCoeff(), 1e-4) << "trial " << trial;
  }
}

TEST(PsdKernel, ScalingEquivariance) {
  GaussianStream g(103);
  Matrix t = random_symmetric(3, g);
  PsdKernel k1(projection_problem(t));
  PsdKernel k2(projection_problem(4.0 * t));
  Matrix x1 = k1.solve(KernelOptions{}).values.at("X");
  Matrix x2 = k2.solve(KernelOptions{}).values.at("X");
  EXPECT_LT((x2 / 4.0 - x1).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(PsdKernel, MarginShiftsProjection) {
  // projecting the origin onto {X >= 3 I} lands on 3 I
  PsdKernel kernel(projection_problem(Matrix::Zero(2, 2), 3.0));
  KernelSolution sol = kernel.solve(KernelOptions{});  // phase 1 must find the start
  ASSERT_TRUE(sol.converged);
  EXPECT_LT((sol.values.at("X") - 3.0 * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(PsdKernel, LinearCostDrivesToConstraintBoundary) {
  AffinePsdProblem p;
  p.blocks.push_back({"X", 2, 2, true});
  p.linear_costs.push_back({"X", Matrix::Identity(2, 2)});  // minimize Tr(X)
  AffineConstraint c;
  c.name = "floor";
  c.size = 2;
  c.margin = 1.0;
  c.expr = [](const BlockValues& v) { return v.at("X"); };
  p.constraints.push_back(std::move(c));
  PsdKernel kernel(p);
  BlockValues fallback{{"X", 5.0 * Matrix::Identity(2, 2)}};
  KernelSolution sol = kernel.solve(KernelOptions{}, nullptr, &fallback);
  ASSERT_TRUE(sol.converged);
  EXPECT_NEAR(sol.values.at("X").trace(), 2.0, 1e-4);
}

TEST(PsdKernel, ScalarIntervalConstraints) {
  // min (x-10)^2 / 2  s.t.  0 <= x <= 5, via two 1x1 cones
  AffinePsdProblem p;
  p.blocks.push_back({"x", 1, 1, false});
  p.targets.push_back({"x", Matrix::Constant(1, 1, 10.0), 1.0});
  AffineConstraint lo{"lo", 1, 0.0, [](const BlockValues& v) { return v.at("x"); }};
  AffineConstraint hi{"hi", 1, 0.0, [](const BlockValues& v) {
                        return Matrix(Matrix::Constant(1, 1, 5.0) - v.at("x"));
                      }};
  p.constraints.push_back(lo);
  p.constraints.push_back(hi);
  PsdKernel kernel(p);
  BlockValues fallback{{"x", Matrix::Constant(1, 1, 2.5)}};
  KernelSolution sol = kernel.solve(KernelOptions{}, nullptr, &fallback);
  ASSERT_TRUE(sol.converged);
  EXPECT_NEAR(sol.values.at("x")(0, 0), 5.0, 1e-5);
}

TEST(PsdKernel, AffineExpressionOverGeneralBlock) {
  // pull a 1x2 row toward (2, 0) subject to [[1, z0],[z0, 1]] >= 0,
  // i.e. |z0| <= 1; optimum is (1, 0)
  AffinePsdProblem p;
  p.blocks.push_back({"z", 1, 2, false});
  Matrix t(1, 2);
  t << 2.0, 0.0;
  p.targets.push_back({"z", t, 1.0});
  AffineConstraint c;
  c.name = "bound";
  c.size = 2;
  c.margin = 0.0;
  c.expr = [](const BlockValues& v) {
    Matrix w = Matrix::Identity(2, 2);
    w(0, 1) = w(1, 0) = v.at("z")(0, 0);
    return w;
  };
  p.constraints.push_back(std::move(c));
  PsdKernel kernel(p);
  BlockValues fallback{{"z", Matrix::Zero(1, 2)}};
  KernelSolution sol = kernel.solve(KernelOptions{}, nullptr, &fallback);
  ASSERT_TRUE(sol.converged);
  EXPECT_NEAR(sol.values.at("z")(0, 0), 1.0, 1e-4);
  EXPECT_NEAR(sol.values.at("z")(0, 1), 0.0, 1e-6);
}

TEST(PsdKernel, MembershipAgainstLyapunovFixedPoint) {
  // F stable; X = F X F' + I satisfies X - F X F' - 0.5 I >= 0 strictly
  Matrix f(2, 2);
  f << 0.5, 0.2, -0.1, 0.4;
  Matrix x = oracles::lyapunov_fixed_point(f, Matrix::Identity(2, 2));
  AffinePsdProblem p;
  p.blocks.push_back({"X", 2, 2, true});
  AffineConstraint c;
  c.name = "lyap";
  c.size = 2;
  c.margin = 0.5;
  c.expr = [f](const BlockValues& v) {
    return Matrix(v.at("X") - f * v.at("X") * f.transpose());
  };
  p.constraints.push_back(std::move(c));
  PsdKernel kernel(p);
  BlockValues at{{"X", x}};
  EXPECT_TRUE(kernel.is_member(at));
  auto eigs = kernel.check_membership(at);
  ASSERT_EQ(eigs.size(), 1u);
  // the residual of the fixed point is exactly I, so min eig is 1
  EXPECT_NEAR(eigs[0], 1.0, 1e-9);

  AffineConstraint tight = p.constraints[0];
  tight.margin = 1.5;
  AffinePsdProblem p2 = p;
  p2.constraints[0] = tight;
  EXPECT_FALSE(PsdKernel(p2).is_member(at));
}

TEST(PsdKernel, WarmStartReachesSameSolutionAfterTargetUpdate) {
  GaussianStream g(107);
  Matrix t1 = random_symmetric(3, g);
  Matrix t2 = random_symmetric(3, g);
  PsdKernel kernel(projection_problem(t1));
  BlockValues fallback{{"X", Matrix::Identity(3, 3)}};
  KernelSolution first = kernel.solve(KernelOptions{}, nullptr, &fallback);
  ASSERT_TRUE(first.converged);

  kernel.update_target("X", t2);
  KernelSolution warm = kernel.solve(KernelOptions{}, &first.values, &fallback);
  ASSERT_TRUE(warm.converged);

  PsdKernel fresh(projection_problem(t2));
  KernelSolution cold = fresh.solve(KernelOptions{}, nullptr, &fallback);
  EXPECT_LT((warm.values.at("X") - cold.values.at("X")).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(PsdKernel, SymmetricBlockStaysSymmetric) {
  GaussianStream g(109);
  Matrix t = random_symmetric(4, g);
  PsdKernel kernel(projection_problem(t));
  Matrix x = kernel.solve(KernelOptions{}).values.at("X");
  EXPECT_EQ((x - x.transpose()).norm(), 0.0);
}

TEST(PsdKernel, OffDiagonalTargetWeighting) {
  // loose constraint: the unconstrained minimizer (the target itself)
  // must be recovered, including off-diagonal entries
  Matrix t(2, 2);
  t << 0.0, 0.7, 0.7, 0.0;
  AffinePsdProblem p;
  p.blocks.push_back({"X", 2, 2, true});
  p.targets.push_back({"X", t, 1.0});
  AffineConstraint c{"loose", 2, 0.0, [](const BlockValues& v) {
                       return Matrix(v.at("X") + 10.0 * Matrix::Identity(2, 2));
                     }};
  p.constraints.push_back(std::move(c));
  PsdKernel kernel(p);
  KernelSolution sol = kernel.solve(KernelOptions{});
  ASSERT_TRUE(sol.converged);
  EXPECT_LT((sol.values.at("X") - t).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(PsdKernel, PackUnpackRoundTrip) {
  AffinePsdProblem p;
  p.blocks.push_back({"S", 3, 3, true});
  p.blocks.push_back({"Z", 2, 4, false});
  // a trivially satisfiable cone keeps the problem well formed
  AffineConstraint c{"pos", 1, 0.0, [](const BlockValues&) {
                       return Matrix(Matrix::Identity(1, 1));
                     }};
  p.constraints.push_back(std::move(c));
  PsdKernel kernel(p);
  GaussianStream g(113);
  BlockValues v;
  v["S"] = random_symmetric(3, g);
  Matrix z(2, 4);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j) z(i, j) = g.normal();
  v["Z"] = z;
  BlockValues back = kernel.unpack(kernel.pack(v));
  EXPECT_LT((back.at("S") - v.at("S")).norm(), 1e-15);
  EXPECT_LT((back.at("Z") - v.at("Z")).norm(), 1e-15);
}

TEST(PsdKernel, ContractViolationsThrow) {
  PsdKernel kernel(projection_problem(Matrix::Identity(2, 2)));
  EXPECT_THROW(kernel.update_target("nope", Matrix::Identity(2, 2)), ContractError);
  EXPECT_THROW(kernel.update_target("X", Matrix::Identity(3, 3)), DimensionError);

  AffinePsdProblem bad;
  bad.blocks.push_back({"B", 2, 3, true});  // symmetric must be square
  EXPECT_THROW(PsdKernel{bad}, DimensionError);
}
