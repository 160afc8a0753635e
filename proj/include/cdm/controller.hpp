#pragma once

// Model-free tip position control: a constrained least-squares step on the
// current Jacobian estimate, then a minimum-Frobenius secant update of the
// estimate from the measured tip motion.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "cdm/cdm_sim.hpp"

namespace cdm {

struct JacobianEstimate {
  Eigen::Matrix2d J = Eigen::Matrix2d::Zero();  // mm tip per mm cable
  int step_index = 0;

  double frobenius_norm() const { return J.norm(); }
};

constexpr int kConstraintRows = 8;
using ConstraintMatrix = Eigen::Matrix<double, kConstraintRows, 2>;
using ConstraintVector = Eigen::Matrix<double, kConstraintRows, 1>;

// Rows: 0-3 per-cable step cap, 4-5 coupling |dl1 + dl2|, 6-7 cumulative pull
// p_i + dl_i <= l_max.
struct ControlConstraints {
  double l_max = 7.0;          // mm
  double per_step_cap = 1.0;   // mm
  double coupling_cap = 0.1;   // mm

  void validate() const;
  ConstraintMatrix A() const;
  ConstraintVector b(const Pull& current_pull) const;
};

struct ControllerParams {
  double epsilon = 0.05;          // mm
  double cable_velocity = 0.05;   // mm/s
  double dl_min = 1e-4;           // mm
  double probe_amplitude = 0.05;  // mm
  int max_iterations = 2000;
  // Commanded tip displacement per iteration is clipped to this length
  // (mm); 0 disables the clip.
  double max_tip_step = 0.5;

  void validate() const;
};

// Actuated cable pair. actuate() blocks (in simulated time) until the move
// completes and the next control tick is reached.
class Plant {
 public:
  virtual ~Plant() = default;
  virtual void actuate(const Pull& dl) = 0;
  virtual Pull pull() const = 0;  // cumulative pull as measured by the drives
  virtual double now() const = 0;
};

struct TipSample {
  Point2 tip = Point2::Zero();
  double timestamp = 0.0;
  std::uint64_t seq = 0;
};

class TipSensor {
 public:
  virtual ~TipSensor() = default;
  // Tip from the most recent complete frame, if any has arrived.
  virtual std::optional<TipSample> latest() = 0;
  virtual double sample_period() const = 0;
};

// Latest tip; throws SensorSilent when nothing arrived within two sample
// periods of `now`.
TipSample read_tip(TipSensor& sensor, double now);

JacobianEstimate initialize_jacobian(Plant& plant, TipSensor& sensor, const ControllerParams& params);

struct PlannedStep {
  Pull dl = Pull::Zero();
  std::vector<int> active_set;
};

PlannedStep plan_step(const JacobianEstimate& J, const Point2& dx_des, const ControlConstraints& constraints,
                      const Pull& current_pull, const std::vector<int>& warm_start = {});

// Secant update through the stacked least-norm problem on vec(dJ).
JacobianEstimate update_jacobian(const JacobianEstimate& J, const Pull& dl, const Point2& dx_meas, double dl_min);

// Rank-one closed form of the same update.
Eigen::Matrix2d broyden_closed_form(const Eigen::Matrix2d& J, const Pull& dl, const Point2& dx_meas);

struct StepRecord {
  int k = 0;
  Pull dl = Pull::Zero();          // commanded cable increment, mm
  Point2 x = Point2::Zero();       // measured tip after the step
  Point2 dx_des = Point2::Zero();  // target - x
  double j_norm = 0.0;             // after this iteration's update
  std::vector<int> active_set;
  double timestamp = 0.0;  // s, plant clock after the step
};

enum class RunVerdict { kConverged, kMaxIterationsReached };

struct RunResult {
  std::vector<StepRecord> trace;
  RunVerdict verdict = RunVerdict::kConverged;
  Point2 start_tip = Point2::Zero();
  Point2 final_tip = Point2::Zero();
};

// Runs until |target - x| < epsilon or max_iterations. Record k values start
// at first_k so that multi-target runs share one numbering. J is updated in
// place. `observer` sees each record as it is produced.
RunResult run_to_target(const Point2& target, Plant& plant, TipSensor& sensor, JacobianEstimate& J,
                        const ControllerParams& params, const ControlConstraints& constraints, int first_k = 0,
                        const std::function<void(const StepRecord&)>& observer = {});

}  // namespace cdm
