#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "pemreg/mpc.hpp"
#include "pemreg/solver.hpp"

using namespace pemreg;


TEST(Nnls, MatchesSupportEnumeration) {
  std::mt19937_64 g(21);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const int rows = 2 + t % 5, cols = 1 + t % 5;
    Eigen::MatrixXd D(rows, cols);
    Eigen::VectorXd c(rows);
    for (int i = 0; i < rows; ++i) {
      c[i] = N(g);
      for (int j = 0; j < cols; ++j) D(i, j) = N(g);
    }
    const NnlsResult r = nnls(D, c);
    ASSERT_EQ(r.status, SolveStatus::optimal);
    EXPECT_GE(r.s.minCoeff(), 0.0);
    EXPECT_NEAR((D * r.s + c).squaredNorm(), oracle::nnls_support_enumeration(D, c), 1e-9);
  }
}

TEST(Nnls, WarmStartGivesTheSameAnswer) {
  std::mt19937_64 g(4);
  std::normal_distribution<double> N(0.0, 1.0);
  Eigen::MatrixXd D(8, 8);
  Eigen::VectorXd c(8);
  for (int i = 0; i < 8; ++i) {
    c[i] = N(g);
    for (int j = 0; j < 8; ++j) D(i, j) = N(g) + (i == j ? 3.0 : 0.0);
  }
  const NnlsResult cold = nnls(D, c);
  for (std::vector<int> warm : {cold.passive, std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7},
                                std::vector<int>{7}}) {
    const NnlsResult w = nnls(D, c, warm);
    EXPECT_LT((w.s - cold.s).lpNorm<Eigen::Infinity>(), 1e-10);
  }
}

TEST(NonnegL1, MatchesLatticeSearchInOneAndTwoDimensions) {
  std::mt19937_64 g(8);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int t = 0; t < 60; ++t) {
    const int cols = 1 + t % 2, rows = 3;
    Eigen::MatrixXd D(rows, cols);
    Eigen::VectorXd c(rows);
    for (int i = 0; i < rows; ++i) {
      c[i] = N(g);
      for (int j = 0; j < cols; ++j) D(i, j) = N(g);
    }
    const L1Result r = nonneg_l1(D, c);
    ASSERT_EQ(r.status, SolveStatus::optimal);
    const double got = (D * r.s + c).lpNorm<1>();
    double best = c.lpNorm<1>();
    const int M = 2000;
    for (int a = 0; a <= M; ++a)
      for (int b = 0; b <= (cols == 2 ? M / 10 : 0); ++b) {
        Eigen::VectorXd s(cols);
        s[0] = 10.0 * a / M;
        if (cols == 2) s[1] = 10.0 * b / (M / 10);
        best = std::min(best, (D * s + c).lpNorm<1>());
      }
    EXPECT_LE(got, best + 1e-9);
    EXPECT_LT(r.primal_residual, 1e-9);
    EXPECT_LT(r.dual_infeasibility, 1e-9);
    EXPECT_LT(r.complementarity, 1e-9);
  }
}

TEST(NonnegL1, ZeroDataGivesZero) {
  const L1Result r = nonneg_l1(Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3));
  EXPECT_EQ(r.status, SolveStatus::optimal);
  EXPECT_EQ(r.s.lpNorm<1>(), 0.0);
}

class LatticeOracle : public ::testing::TestWithParam<int> {};

TEST_P(LatticeOracle, SolveMatchesLatticeSearchAndSatisfiesKkt) {
  const int p = GetParam();
  std::mt19937_64 g(100 + p);
  for (int t = 0; t < 30; ++t) {
    const int n = 1 + t % 4;
    const MpcProblem pr = t % 2 ? oracle::random_problem(n, p, g) : oracle::vb_problem(n, p, g);
    const Solution sol = solve(pr, p);
    ASSERT_EQ(sol.status, SolveStatus::optimal) << "instance " << t;
    EXPECT_LT(sol.kkt.max(), 1e-6);
    const int points = n == 1 ? 20001 : (n == 2 ? 401 : (n == 3 ? 61 : 21));
    const oracle::LatticeResult lat = oracle::lattice_search(pr, p, points);
    const double obj = oracle::objective(pr, sol.dU, p, 1e-9);
    ASSERT_TRUE(std::isfinite(obj));
    EXPECT_NEAR(obj, sol.objective, 1e-9 * std::max(1.0, obj));
    const double tol = 1e-9 * std::max(1.0, lat.best);
    EXPECT_LE(obj, lat.best + tol) << "instance " << t;
    EXPECT_LE(lat.best - obj, lat.tolerance + tol) << "instance " << t;
    EXPECT_NEAR(obj, oracle::exact_optimum(pr, p), 1e-9 * std::max(1.0, obj)) << "instance " << t;
  }
}

INSTANTIATE_TEST_SUITE_P(Norms, LatticeOracle, ::testing::Values(1, 2));

TEST(Solve, RejectsMalformedProblems) {
  std::mt19937_64 g(1);
  MpcProblem pr = oracle::random_problem(3, 2, g);
  EXPECT_THROW((void)solve(pr, 3), InputError);
  MpcProblem bad = pr;
  bad.M_u(1, 1) = 0.5;
  EXPECT_THROW((void)solve(bad, 2), InputError);
  bad = pr;
  bad.R.resize(2);
  EXPECT_THROW((void)solve(bad, 2), InputError);
}

TEST(Solve, TightKktToleranceDowngradesStatus) {
  std::mt19937_64 g(2);
  const MpcProblem pr = oracle::random_problem(4, 2, g);
  const Solution sol = solve(pr, 2, {}, {}, 1e-300);
  EXPECT_NE(sol.status, SolveStatus::optimal);
}
