#include <gtest/gtest.h>

#include <random>

#include "cdm/errors.hpp"
#include "cdm/qp_core.hpp"
#include "support.hpp"

using namespace cdm;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

qp::Problem distance_to(const Eigen::Vector2d& c) {
  // ||x - c||^2 / 2
  return qp::make_problem(MatrixXd::Identity(2, 2), -c);
}

}  // namespace

TEST(QpCore, UnconstrainedIsNewtonPoint) {
  const auto sol = qp::solve(qp::make_problem(MatrixXd::Identity(2, 2), -Eigen::Vector2d(1, 2)));
  EXPECT_NEAR((sol.x - Eigen::Vector2d(1, 2)).norm(), 0.0, 1e-12);
  EXPECT_TRUE(sol.active_set.empty());
}

TEST(QpCore, SingleBindingBound) {
  auto pr = distance_to({2, 0});
  pr.A_in = MatrixXd(1, 2);
  pr.A_in << 1, 0;
  pr.b_in = VectorXd::Constant(1, 1.0);
  const auto sol = qp::solve(pr);
  EXPECT_NEAR((sol.x - Eigen::Vector2d(1, 0)).norm(), 0.0, 1e-12);
  ASSERT_EQ(sol.active_set, std::vector<int>{0});
  EXPECT_NEAR(sol.in_multipliers(0), 1.0, 1e-12);
}

TEST(QpCore, EqualityProjection) {
  auto pr = distance_to({0, 0});
  pr.A_eq = MatrixXd(1, 2);
  pr.A_eq << 1, 1;
  pr.b_eq = VectorXd::Constant(1, 2.0);
  const auto sol = qp::solve(pr);
  EXPECT_NEAR((sol.x - Eigen::Vector2d(1, 1)).norm(), 0.0, 1e-12);
}

TEST(QpCore, InfeasibleIsReported) {
  auto pr = distance_to({0, 0});
  pr.A_in = MatrixXd(2, 2);
  pr.A_in << 1, 0, -1, 0;
  pr.b_in = Eigen::Vector2d(-1.0, -1.0);  // x <= -1 and x >= 1
  try {
    qp::solve(pr);
    FAIL() << "expected Infeasible";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInfeasible);
  }
}

TEST(QpCore, IndefiniteHessianRejected) {
  MatrixXd H(2, 2);
  H << 1, 0, 0, -1;
  try {
    qp::solve(qp::make_problem(H, VectorXd::Zero(2)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIllConditioned);
  }
}

TEST(QpCore, LeastNormExamples) {
  MatrixXd A(1, 2);
  A << 1, 0;
  EXPECT_NEAR((qp::least_norm_update(A, VectorXd::Constant(1, 2.0), 2) - Eigen::Vector2d(2, 0)).norm(), 0, 1e-12);
  A << 1, 1;
  EXPECT_NEAR((qp::least_norm_update(A, VectorXd::Constant(1, 2.0), 2) - Eigen::Vector2d(1, 1)).norm(), 0, 1e-12);
}

TEST(QpCore, LeastNormRankDeficient) {
  MatrixXd A(2, 2);
  A << 1, 1, 2, 2;
  try {
    qp::least_norm_update(A, Eigen::Vector2d(1, 2), 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRankDeficient);
  }
}

TEST(QpCore, LeastNormMatchesSolve) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> N;
  for (int trial = 0; trial < 200; ++trial) {
    MatrixXd A(2, 4);
    for (int i = 0; i < 8; ++i) A(i / 4, i % 4) = N(rng);
    const Eigen::Vector2d b(N(rng), N(rng));
    auto pr = qp::make_problem(MatrixXd::Identity(4, 4), VectorXd::Zero(4));
    pr.A_eq = A;
    pr.b_eq = b;
    const VectorXd x = qp::least_norm_update(A, b, 4);
    EXPECT_LT((x - qp::solve(pr).x).norm(), 1e-10);
  }
}

TEST(QpCore, WarmStartGivesSameAnswer) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto pr = oracle::random_qp(rng, 3, 0, 6);
    const auto cold = qp::solve(pr);
    qp::Options o;
    o.warm_start = cold.active_set;
    const auto warm = qp::solve(pr, o);
    EXPECT_LT((cold.x - warm.x).norm(), 1e-9);
    EXPECT_EQ(cold.active_set, warm.active_set);
  }
}

TEST(QpCore, MatchesEnumerationOracle) {
  std::mt19937_64 rng(20240611);
  std::uniform_int_distribution<int> nd(1, 6), md(0, 12);
  double worst = 0.0, worst_kkt = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = nd(rng);
    const int p = std::uniform_int_distribution<int>(0, std::min(2, n - 1))(rng);
    const int m = md(rng);
    const auto pr = oracle::random_qp(rng, n, p, m);
    const auto sol = qp::solve(pr);
    const auto ref = oracle::brute_force_qp(pr);
    ASSERT_TRUE(ref.has_value()) << "trial " << trial;
    worst = std::max(worst, (sol.x - *ref).cwiseAbs().maxCoeff());
    worst_kkt = std::max(worst_kkt, qp::stationarity_residual(pr, sol));
    EXPECT_LE(qp::max_violation(pr, sol.x), 1e-9) << "trial " << trial;
    for (int i : sol.active_set) EXPECT_GE(sol.in_multipliers(i), -1e-9) << "trial " << trial;
  }
  EXPECT_LT(worst, 1e-7);
  EXPECT_LT(worst_kkt, 1e-8);
}
