#pragma once

// Wavelength -> curvature calibration, curvature interpolation along the
// body and planar shape integration. Points are (lateral, axial) mm; a
// positive curvature turns the tangent toward +lateral.

#include <array>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cdm/fbg_model.hpp"

namespace cdm {

struct ChannelFit {
  double slope = 0.0;         // (1/m) per nm
  double intercept = 0.0;     // 1/m
  double residual_rms = 0.0;  // 1/m
};

struct CalibrationMap {
  std::array<ChannelFit, kChannels> fits{};

  void validate() const;
  nlohmann::json to_json() const;
  static CalibrationMap from_json(const nlohmann::json& j);
  std::string dump() const;  // canonical text form, byte-stable
};

struct CalibrationJigSet {
  std::vector<double> curvatures{0.0, 10.0, 20.0, 30.0, 40.0, 50.0};  // 1/m

  void validate(double kappa_max) const;
};

// Ordinary least squares per channel of jig curvature against the mean shift
// of that jig's frames. frames[j] belongs to jigs.curvatures[j].
CalibrationMap calibrate(const CalibrationJigSet& jigs, const std::vector<std::vector<WavelengthFrame>>& frames);

// Synthetic jig frames: every channel sees the jig curvature.
std::vector<std::vector<WavelengthFrame>> jig_frames(const FbgLayout& layout, const CalibrationJigSet& jigs,
                                                     int frames_per_jig, std::uint64_t seed);

ChannelValues curvatures(const WavelengthFrame& frame, const CalibrationMap& map);

// Piecewise-linear curvature through the AA values, clamped outside the AA span.
double curvature_profile_at(const std::array<double, 3>& kappa, const std::array<double, 3>& aa_positions, double s);

// Integration steps: step i covers arc [s_i - ds_i/2, s_i + ds_i/2] and
// carries the curvature at its midpoint s_i.
struct CurvatureSamples {
  std::vector<double> s;      // mm
  std::vector<double> kappa;  // 1/m
  std::vector<double> ds;     // mm
};

// n_per_segment steps on each AA-to-AA segment; the clamped end regions get
// the step density of the neighbouring segment.
CurvatureSamples interpolate_curvature(const std::array<double, 3>& kappa, const std::array<double, 3>& aa_positions,
                                       int n_per_segment, double total_length);

// Constant-curvature arc per step, accumulated in the rotating local frame.
// Returns the base point followed by one point per step.
std::vector<Point2> integrate_shape(const CurvatureSamples& samples);

struct ReconstructedShape {
  std::array<std::vector<Point2>, kFibers> fibers;
  Point2 tip = Point2::Zero();  // mean of the fiber end points
  int n_points_per_segment = 10;
};

ReconstructedShape reconstruct(const WavelengthFrame& frame, const CalibrationMap& map, const FbgLayout& layout,
                               double active_length, int n_per_segment = 10);

}  // namespace cdm
