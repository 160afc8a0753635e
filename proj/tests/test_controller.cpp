#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cdm/controller.hpp"
#include "cdm/errors.hpp"
#include "support.hpp"

using namespace cdm;
using oracle::LinearPlant;
using oracle::PlantSensor;

TEST(ControlConstraints, MatrixAndBounds) {
  ControlConstraints c;
  const auto A = c.A();
  const auto b = c.b(Pull(2.0, 6.5));
  // Per-cable caps.
  EXPECT_EQ(A.row(0), Eigen::RowVector2d(1, 0));
  EXPECT_EQ(A.row(1), Eigen::RowVector2d(0, 1));
  EXPECT_EQ(A.row(2), Eigen::RowVector2d(-1, 0));
  EXPECT_EQ(A.row(3), Eigen::RowVector2d(0, -1));
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(b(i), 1.0);
  // Coupling.
  EXPECT_EQ(A.row(4), Eigen::RowVector2d(1, 1));
  EXPECT_EQ(A.row(5), Eigen::RowVector2d(-1, -1));
  EXPECT_DOUBLE_EQ(b(4), 0.1);
  EXPECT_DOUBLE_EQ(b(5), 0.1);
  // Cumulative pull refreshed from the current state.
  EXPECT_EQ(A.row(6), Eigen::RowVector2d(1, 0));
  EXPECT_EQ(A.row(7), Eigen::RowVector2d(0, 1));
  EXPECT_DOUBLE_EQ(b(6), 5.0);
  EXPECT_DOUBLE_EQ(b(7), 0.5);
  EXPECT_GE(c.b(Pull(7.0, -3.0)).minCoeff(), 0.0);
}

TEST(PlanStep, ZeroDemandZeroStep) {
  JacobianEstimate J;
  J.J << -0.5, 0.5, -0.2, 0.2;
  const auto s = plan_step(J, Point2::Zero(), ControlConstraints{}, Pull::Zero());
  EXPECT_LT(s.dl.norm(), 1e-12);
}

TEST(PlanStep, AntagonisticStepOnRankOneJacobian) {
  JacobianEstimate J;
  J.J << -0.5, 0.5, -0.2, 0.2;
  // J (a, -a) = a (-1, -0.4); least-norm choice puts no common mode in.
  const auto s = plan_step(J, Point2(-0.2, -0.08), ControlConstraints{}, Pull::Zero());
  EXPECT_NEAR(s.dl(0), 0.2, 1e-6);
  EXPECT_NEAR(s.dl(1), -0.2, 1e-6);
  for (int r : s.active_set) EXPECT_NE(r, 4);
  for (int r : s.active_set) EXPECT_NE(r, 5);
}

TEST(PlanStep, PerCableCapBindsOnLargeDemand) {
  JacobianEstimate J;
  J.J << -0.5, 0.5, -0.2, 0.2;
  const auto s = plan_step(J, Point2(-100, -40), ControlConstraints{}, Pull::Zero());
  EXPECT_NEAR(std::max(std::abs(s.dl(0)), std::abs(s.dl(1))), 1.0, 1e-9);
  bool cap_row = false;
  for (int r : s.active_set) cap_row |= r < 4;
  EXPECT_TRUE(cap_row);
  const auto slack = ControlConstraints{}.b(Pull::Zero()) - ControlConstraints{}.A() * s.dl;
  EXPECT_GE(slack.minCoeff(), -1e-9);
}

TEST(PlanStep, CumulativeRowLimitsPull) {
  JacobianEstimate J;
  J.J << -1.0, 1.0, 0.0, 0.0;
  const auto s = plan_step(J, Point2(-5, 0), ControlConstraints{}, Pull(6.7, -6.7));
  EXPECT_LE(6.7 + s.dl(0), 7.0 + 1e-9);
}

TEST(UpdateJacobian, HandWorkedRankOne) {
  JacobianEstimate J;
  J.J = Eigen::Matrix2d::Identity();
  const auto out = update_jacobian(J, Pull(1, 0), Point2(2, 0), 1e-4);
  Eigen::Matrix2d expect;
  expect << 2, 0, 0, 1;
  EXPECT_LT((out.J - expect).norm(), 1e-14);
}

TEST(UpdateJacobian, ConsistentMeasurementLeavesEstimate) {
  JacobianEstimate J;
  J.J << 0.3, -0.7, 1.1, 0.2;
  const Pull dl(0.4, -0.25);
  EXPECT_LT((update_jacobian(J, dl, J.J * dl, 1e-4).J - J.J).norm(), 1e-15);
}

TEST(UpdateJacobian, TinyStepIsDegenerate) {
  JacobianEstimate J;
  try {
    update_jacobian(J, Pull(5e-5, 0), Point2(1, 1), 1e-4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateStep);
  }
}

// QP path against the rank-one closed form, secant condition and the
// analytic minimum of the correction.
TEST(UpdateJacobian, RandomEquivalence) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> N;
  for (int t = 0; t < 1000; ++t) {
    JacobianEstimate J;
    J.J << N(rng), N(rng), N(rng), N(rng);
    Pull dl(N(rng), N(rng));
    if (dl.norm() < 1e-3) dl *= 1e-3 / dl.norm() + 1.0;
    const Point2 dx(N(rng), N(rng));
    const auto upd = update_jacobian(J, dl, dx, 1e-4);
    EXPECT_LT((upd.J - broyden_closed_form(J.J, dl, dx)).norm(), 1e-10);
    EXPECT_LT((dx - upd.J * dl).norm(), 1e-9);
    EXPECT_NEAR((upd.J - J.J).norm(), (dx - J.J * dl).norm() / dl.norm(), 1e-10);
  }
}

TEST(InitializeJacobian, LinearPlantAlongProbe) {
  Eigen::Matrix2d M;
  M << -2.1, 1.7, -0.4, 0.9;
  LinearPlant plant(M, Eigen::Vector2d(0, 34));
  PlantSensor sensor(plant);
  const auto J = initialize_jacobian(plant, sensor, ControllerParams{});
  const Eigen::Vector2d e = Eigen::Vector2d(1, -1) / std::sqrt(2.0);
  EXPECT_LT((J.J * e - M * e).norm(), 1e-6);
  EXPECT_LT(plant.pull().norm(), 1e-9);
}

TEST(InitializeJacobian, JammedPlantFallsBack) {
  LinearPlant plant(Eigen::Matrix2d::Zero(), Eigen::Vector2d(0, 34));
  PlantSensor sensor(plant);
  const auto J = initialize_jacobian(plant, sensor, ControllerParams{});
  EXPECT_LT((J.J - 0.1 * Eigen::Matrix2d::Identity()).norm(), 1e-15);
}

namespace {
class SilentSensor : public TipSensor {
 public:
  std::optional<TipSample> latest() override { return std::nullopt; }
  double sample_period() const override { return 0.005; }
};
class StaleSensor : public TipSensor {
 public:
  std::optional<TipSample> latest() override { return TipSample{Point2(0, 34), 0.0, 0}; }
  double sample_period() const override { return 0.005; }
};
}  // namespace

TEST(ReadTip, SilentAndStaleSensors) {
  SilentSensor silent;
  StaleSensor stale;
  EXPECT_THROW(read_tip(silent, 0.0), Error);
  EXPECT_NO_THROW(read_tip(stale, 0.009));
  try {
    read_tip(stale, 0.02);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSensorSilent);
  }
}

TEST(RunToTarget, AlreadyThere) {
  LinearPlant plant(Eigen::Matrix2d::Identity(), Eigen::Vector2d(0, 34));
  PlantSensor sensor(plant);
  JacobianEstimate J;
  J.J = Eigen::Matrix2d::Identity();
  const auto r = run_to_target(Point2(0.01, 34), plant, sensor, J, ControllerParams{}, ControlConstraints{});
  EXPECT_TRUE(r.trace.empty());
  EXPECT_EQ(r.verdict, RunVerdict::kConverged);
  EXPECT_EQ(plant.pull(), Pull::Zero());
}

TEST(RunToTarget, ConvergesOnLinearPlantWithinConstraints) {
  // Antagonistic plant with a weak common-mode response.
  Eigen::Matrix2d M;
  M << -1.5, 1.5, -0.3, 0.1;
  LinearPlant plant(M, Eigen::Vector2d(0, 34));
  PlantSensor sensor(plant);
  ControllerParams params;
  ControlConstraints cons;
  auto J = initialize_jacobian(plant, sensor, params);
  const Point2 target = Point2(0, 34) + M * Pull(2.0, -1.9);
  const auto r = run_to_target(target, plant, sensor, J, params, cons);
  ASSERT_EQ(r.verdict, RunVerdict::kConverged);
  EXPECT_LT((target - plant.tip()).norm(), params.epsilon);
  Pull p = Pull::Zero();
  double t_prev = 0.0;
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    const auto& rec = r.trace[i];
    EXPECT_EQ(rec.k, static_cast<int>(i));
    EXPECT_GE((cons.b(p) - cons.A() * rec.dl).minCoeff(), -1e-9);
    EXPECT_GT(rec.timestamp, t_prev);
    t_prev = rec.timestamp;
    p += rec.dl;
  }
}

TEST(RunToTarget, IterationCapIsAVerdict) {
  LinearPlant plant(Eigen::Matrix2d::Zero(), Eigen::Vector2d(0, 34));
  PlantSensor sensor(plant);
  ControllerParams params;
  params.max_iterations = 25;
  JacobianEstimate J;
  J.J = 0.1 * Eigen::Matrix2d::Identity();
  const auto r = run_to_target(Point2(-5, 30), plant, sensor, J, params, ControlConstraints{});
  EXPECT_EQ(r.verdict, RunVerdict::kMaxIterationsReached);
  EXPECT_EQ(r.trace.size(), 25u);
}
