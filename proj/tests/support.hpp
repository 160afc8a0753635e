#pragma once

// Oracles and fakes shared by the unit tests and the acceptance binary.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "cdm/controller.hpp"
#include "cdm/qp_core.hpp"

namespace cdm::oracle {

// Enumerates every subset of inequality rows as equalities and keeps the
// feasible point of least objective. Exponential; only for tiny problems.
std::optional<Eigen::VectorXd> brute_force_qp(const qp::Problem& pr, double feas_tol = 1e-9);

// Random strictly convex problem with a nonempty feasible set.
qp::Problem random_qp(std::mt19937_64& rng, int n, int p, int m);

// Endpoint of a constant-curvature arc of length L (mm) at kappa (1/m),
// in (lateral, axial) with positive curvature toward +lateral.
Eigen::Vector2d arc_endpoint(double kappa_per_m, double L);

// Endpoint of the piecewise-linear curvature profile through three AA values
// (clamped outside), by composite Simpson on a fine grid with the heading
// integrated in closed form.
Eigen::Vector2d profile_endpoint(const std::array<double, 3>& kappa, const std::array<double, 3>& aa, double L);

// tip = x0 + M * pull, one simulated second per actuation.
class LinearPlant : public Plant {
 public:
  LinearPlant(Eigen::Matrix2d M, Eigen::Vector2d x0) : M_(std::move(M)), x0_(std::move(x0)) {}
  void actuate(const Pull& dl) override {
    pull_ += dl;
    t_ += 1.0;
  }
  Pull pull() const override { return pull_; }
  double now() const override { return t_; }
  Eigen::Vector2d tip() const { return x0_ + M_ * pull_; }

 private:
  Eigen::Matrix2d M_;
  Eigen::Vector2d x0_;
  Pull pull_ = Pull::Zero();
  double t_ = 0.0;
};

class PlantSensor : public TipSensor {
 public:
  explicit PlantSensor(const LinearPlant& plant) : plant_(plant) {}
  std::optional<TipSample> latest() override {
    return TipSample{plant_.tip(), plant_.now(), seq_++};
  }
  double sample_period() const override { return 0.005; }

 private:
  const LinearPlant& plant_;
  std::uint64_t seq_ = 0;
};

}  // namespace cdm::oracle
