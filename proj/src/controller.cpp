#include <cstdio>
#include "cdm/controller.hpp"

#include <cmath>
#include <string>

#include "cdm/errors.hpp"
#include "cdm/qp_core.hpp"

namespace cdm {

void ControlConstraints::validate() const {
  if (!(l_max > 0) || !(per_step_cap > 0) || !(coupling_cap > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "control constraint limits must be > 0");
  }
}

ConstraintMatrix ControlConstraints::A() const {
  ConstraintMatrix a;
  a << 1, 0,
       0, 1,
       -1, 0,
       0, -1,
       1, 1,
       -1, -1,
       1, 0,
       0, 1;
  return a;
}

ConstraintVector ControlConstraints::b(const Pull& p) const {
  ConstraintVector v;
  v << per_step_cap, per_step_cap, per_step_cap, per_step_cap, coupling_cap, coupling_cap, l_max - p(0), l_max - p(1);
  return v;
}

void ControllerParams::validate() const {
  auto bad = [](const std::string& w) { throw Error(ErrorCode::kInvalidArgument, "ControllerParams: " + w); };
  if (!(epsilon > 0)) bad("epsilon must be > 0");
  if (!(cable_velocity > 0)) bad("cable_velocity must be > 0");
  if (!(dl_min >= 0 && dl_min < probe_amplitude)) bad("need 0 <= dl_min < probe_amplitude");
  if (max_iterations < 0) bad("max_iterations must be >= 0");
  if (!(max_tip_step >= 0)) bad("max_tip_step must be >= 0");
}

TipSample read_tip(TipSensor& sensor, double now) {
  const auto s = sensor.latest();
  const double limit = 2.0 * sensor.sample_period();
  if (!s || now - s->timestamp > limit + 1e-12) {
    throw Error(ErrorCode::kSensorSilent, "no sensor frame within two sample periods of t=" + std::to_string(now));
  }
  return *s;
}

JacobianEstimate initialize_jacobian(Plant& plant, TipSensor& sensor, const ControllerParams& params) {
  params.validate();
  const double a = params.probe_amplitude;
  const Point2 x0 = read_tip(sensor, plant.now()).tip;
  plant.actuate(Pull(a, -a));
  const Point2 x1 = read_tip(sensor, plant.now()).tip;
  plant.actuate(Pull(-a, a));
  const Point2 x2 = read_tip(sensor, plant.now()).tip;

  // Forward and return differences along e = (1, -1)/sqrt(2). Common-mode
  // pull has no first-order tip effect from the straight pose, so that column
  // starts at zero and is left to the updates.
  const Eigen::Vector2d e = Eigen::Vector2d(1.0, -1.0) / std::sqrt(2.0);
  const Eigen::Vector2d u = ((x1 - x0) + (x1 - x2)) / (2.0 * a * std::sqrt(2.0));
  JacobianEstimate J;
  if (u.norm() < 1e-6) {
    J.J = 0.1 * Eigen::Matrix2d::Identity();
  } else {
    J.J = u * e.transpose();
  }
  return J;
}

PlannedStep plan_step(const JacobianEstimate& J, const Point2& dx_des, const ControlConstraints& constraints,
                      const Pull& current_pull, const std::vector<int>& warm_start) {
  if (!J.J.allFinite() || !dx_des.allFinite()) throw Error(ErrorCode::kInvalidArgument, "non-finite plan input");
  // Small ridge, relative so it survives a large estimate; it also picks the
  // least-norm step when J is rank deficient.
  const Eigen::Matrix2d JtJ = 2.0 * J.J.transpose() * J.J;
  const Eigen::Matrix2d H = JtJ + 1e-8 * std::max(1.0, JtJ.trace()) * Eigen::Matrix2d::Identity();
  const Eigen::Vector2d g = -2.0 * J.J.transpose() * dx_des;
  qp::Problem pr = qp::make_problem(H, g);
  pr.A_in = constraints.A();
  pr.b_in = constraints.b(current_pull);
  qp::Options opt;
  opt.warm_start = warm_start;
  PlannedStep out;
  try {
    const qp::Solution sol = qp::solve(pr, opt);
    out.dl = sol.x;
    out.active_set = sol.active_set;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInfeasible) {
      throw Error(ErrorCode::kQpInfeasible, std::string("control step: ") + e.what());
    }
    throw;
  }
  return out;
}

Eigen::Matrix2d broyden_closed_form(const Eigen::Matrix2d& J, const Pull& dl, const Point2& dx) {
  return J + (dx - J * dl) * dl.transpose() / dl.squaredNorm();
}

JacobianEstimate update_jacobian(const JacobianEstimate& J, const Pull& dl, const Point2& dx, double dl_min) {
  if (!(dl.norm() >= dl_min) || dl.norm() == 0.0) {
    throw Error(ErrorCode::kDegenerateStep, "cable step below the update threshold");
  }
  // vec(dJ) row-major: (dJ11, dJ12, dJ21, dJ22); dJ * dl = residual.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2, 4);
  A(0, 0) = dl(0);
  A(0, 1) = dl(1);
  A(1, 2) = dl(0);
  A(1, 3) = dl(1);
  const Eigen::VectorXd r = dx - J.J * dl;
  const Eigen::VectorXd v = qp::least_norm_update(A, r, 4);
  JacobianEstimate out;
  out.J << J.J(0, 0) + v(0), J.J(0, 1) + v(1), J.J(1, 0) + v(2), J.J(1, 1) + v(3);
  out.step_index = J.step_index + 1;
  return out;
}

RunResult run_to_target(const Point2& target, Plant& plant, TipSensor& sensor, JacobianEstimate& J,
                        const ControllerParams& params, const ControlConstraints& constraints, int first_k,
                        const std::function<void(const StepRecord&)>& observer) {
  params.validate();
  constraints.validate();
  RunResult out;
  Point2 x = read_tip(sensor, plant.now()).tip;
  out.start_tip = x;
  Point2 dx_des = target - x;
  std::vector<int> warm;
  int k = 0;
  while (dx_des.norm() >= params.epsilon && k < params.max_iterations) {
    Point2 dx_cmd = dx_des;
    if (params.max_tip_step > 0 && dx_cmd.norm() > params.max_tip_step) {
      dx_cmd *= params.max_tip_step / dx_cmd.norm();
    }
    const PlannedStep step = plan_step(J, dx_cmd, constraints, plant.pull(), warm);
    warm = step.active_set;
    plant.actuate(step.dl);
    const Point2 x_new = read_tip(sensor, plant.now()).tip;
    if (step.dl.norm() >= params.dl_min && step.dl.norm() > 0.0) {
      J = update_jacobian(J, step.dl, x_new - x, params.dl_min);
    }
    x = x_new;
    dx_des = target - x;

    StepRecord rec;
    rec.k = first_k + k;
    rec.dl = step.dl;
    rec.x = x;
    rec.dx_des = dx_des;
    rec.j_norm = J.frobenius_norm();
    rec.active_set = step.active_set;
    rec.timestamp = plant.now();
    if (observer) observer(rec);
    out.trace.push_back(std::move(rec));
    ++k;
  }
  out.final_tip = x;
  out.verdict = dx_des.norm() < params.epsilon ? RunVerdict::kConverged : RunVerdict::kMaxIterationsReached;
  return out;
}

}  // namespace cdm
