#pragma once

// Quasi-static simulator of a planar cable-driven continuum manipulator.
//
// The body is an n-link pseudo-rigid chain. Joint i sits at the distal end of
// link i, so it rotates links i+1..n-1. A positive joint angle bends toward
// negative lateral; positive differential pull (p1 - p2) produces positive
// angles. Planar points are (lateral, axial) in mm with the base at the
// origin and the straight body along +axial.
//
// Equilibrium minimizes elastic energy plus obstacle penalty energy under the
// antagonistic routing constraint  r * sum(theta) = p1 - p2  and the
// curvature cap |theta_i| <= kappa_max * link_length.

#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace cdm {

using Point2 = Eigen::Vector2d;  // (lateral, axial) mm
using Pull = Eigen::Vector2d;    // cumulative cable pull (p1, p2) mm, positive shortens

struct CdmConfig {
  int n_links = 20;
  double active_length = 34.0;  // mm
  double cable_offset = 2.5;    // mm
  std::vector<double> joint_stiffness;  // N mm / rad, one per joint
  double kappa_max = 166.7;             // 1/m
  double contact_stiffness_hard = 1e4;  // N/mm
  double contact_stiffness_soft = 5.0;  // N/mm

  // Superelastic softening: joint torque is
  //   k * ((1 - f) * theta + f * a * tanh(theta / a))
  // with f = softening_fraction and a = softening_angle. f = 0 is a linear spring.
  double softening_fraction = 0.6;
  double softening_angle = 0.02;  // rad

  // Common-mode cable preload c = (p1 + p2) / 2 redistributes stiffness along
  // the body: k_i(c) = k_i * exp(gain * c * (sigma_i - 1/2)), sigma_i the
  // normalized joint position. Positive preload stiffens the distal end.
  double preload_redistribution = 0.4;  // 1/mm

  // Default body: stiffness ramping linearly from 4000 at the base to 8000 at the tip.
  static CdmConfig defaults();
  static std::vector<double> graded_stiffness(int n_links, double base, double tip_ratio);

  void validate() const;
  double link_length() const { return active_length / n_links; }
  double max_joint_angle() const { return kappa_max * 1e-3 * link_length(); }
};

enum class ObstacleKind { kHard, kSoft };

struct Obstacle {
  Point2 center = Point2::Zero();
  double radius = 1.0;
  ObstacleKind kind = ObstacleKind::kHard;

  double stiffness(const CdmConfig& config) const {
    return kind == ObstacleKind::kHard ? config.contact_stiffness_hard : config.contact_stiffness_soft;
  }
  void validate(const CdmConfig& config) const;
};

struct CdmState {
  Eigen::VectorXd joint_angles;  // rad
  Pull cable_pull = Pull::Zero();
  Point2 tip = Point2::Zero();
  std::vector<bool> contact_active;  // per obstacle
  std::vector<double> penetration;   // deepest penetration per obstacle, mm
  double energy = 0.0;               // N mm
  int solver_iterations = 0;
};

struct EquilibriumOptions {
  double gradient_tol = 1e-9;
  // Convergence slows near folds of the equilibrium path, where the body is
  // about to slip off an obstacle.
  int max_iterations = 5000;
  // Continuation substep limits when obstacles are present.
  double max_bend_substep = 0.02;     // rad of total bend
  double max_preload_substep = 0.05;  // mm of common-mode pull
  // Newton steps move no body point farther than this, so a step cannot
  // carry the body across an obstacle between two energy evaluations.
  double max_point_step = 0.25;  // mm
};

// Straight, unloaded state.
CdmState straight_state(const CdmConfig& config, std::size_t n_obstacles = 0);

// Equilibrium at the given cumulative pull. Without obstacles the solution is
// unique. With obstacles it follows the quasi-static path from the straight
// state (or from `warm_start`, whose pull is the path origin).
CdmState equilibrium(const CdmConfig& config, const Pull& pull, const std::vector<Obstacle>& obstacles,
                     const EquilibriumOptions& options = {});
CdmState equilibrium_from(const CdmConfig& config, const CdmState& warm_start, const Pull& pull,
                          const std::vector<Obstacle>& obstacles, const EquilibriumOptions& options = {});

struct PullResult {
  CdmState state;
  double elapsed = 0.0;  // s
};

// Moves the cables by `delta` at `rate` mm/s and re-solves equilibrium.
PullResult apply_pull_increment(const CdmConfig& config, const CdmState& state, const Pull& delta,
                                double rate, const std::vector<Obstacle>& obstacles,
                                const EquilibriumOptions& options = {});

// Forward kinematics.
Point2 tip(const CdmConfig& config, const Eigen::VectorXd& joint_angles);
inline Point2 tip(const CdmState& state) { return state.tip; }

// Link endpoints P_0 (base) .. P_n (tip).
std::vector<Point2> link_points(const CdmConfig& config, const Eigen::VectorXd& joint_angles);

// Sample points used for contact: every link midpoint and distal endpoint.
std::vector<Point2> contact_points(const CdmConfig& config, const Eigen::VectorXd& joint_angles);

// Centerline curvature (1/m) at arc length s (mm): joint curvatures
// theta_i / link_length placed at the joints, linear in between.
double curvature_at(const CdmConfig& config, const CdmState& state, double s);

// Total energy of a configuration (elastic + obstacle penalty), N mm.
double total_energy(const CdmConfig& config, const Pull& pull, const Eigen::VectorXd& joint_angles,
                    const std::vector<Obstacle>& obstacles);

// Differential cable tension (N) holding an equilibrium.
double cable_tension(const CdmConfig& config, const CdmState& state, const std::vector<Obstacle>& obstacles);

// Largest extra moment (N mm) a joint held at the curvature cap carries
// beyond the cable moment.
double cap_reaction(const CdmConfig& config, const CdmState& state, const std::vector<Obstacle>& obstacles);

// Tension at which the free body first reaches the curvature cap.
double free_tension_at_cap(const CdmConfig& config, double preload);

// Signed distance from a point to the obstacle surface (negative inside).
double signed_distance(const Obstacle& obstacle, const Point2& p);

// Effective joint stiffness at a given common-mode preload.
Eigen::VectorXd effective_stiffness(const CdmConfig& config, double preload);

// Free-space joint angles for a total bend (no obstacles, no curvature cap check).
Eigen::VectorXd free_space_angles(const CdmConfig& config, const Pull& pull);

}  // namespace cdm
