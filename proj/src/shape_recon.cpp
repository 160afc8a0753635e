#include "cdm/shape_recon.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "cdm/errors.hpp"

namespace cdm {

void CalibrationMap::validate() const {
  for (int c = 0; c < kChannels; ++c) {
    const auto& f = fits[static_cast<std::size_t>(c)];
    if (!std::isfinite(f.slope) || f.slope == 0.0 || !std::isfinite(f.intercept) || !std::isfinite(f.residual_rms)) {
      throw Error(ErrorCode::kInvalidArgument, "calibration channel " + std::to_string(c) + " is invalid");
    }
  }
}

nlohmann::json CalibrationMap::to_json() const {
  nlohmann::json channels = nlohmann::json::array();
  for (int c = 0; c < kChannels; ++c) {
    const auto& f = fits[static_cast<std::size_t>(c)];
    channels.push_back({{"fiber", c / kAasPerFiber + 1},
                        {"aa", c % kAasPerFiber + 1},
                        {"slope_per_m_per_nm", f.slope},
                        {"intercept_per_m", f.intercept},
                        {"residual_rms_per_m", f.residual_rms}});
  }
  return {{"channels", channels}};
}

CalibrationMap CalibrationMap::from_json(const nlohmann::json& j) {
  CalibrationMap m;
  try {
    const auto& ch = j.at("channels");
    if (!ch.is_array() || ch.size() != kChannels) {
      throw Error(ErrorCode::kMalformedConfig, "calibration map needs 6 channels");
    }
    for (const auto& e : ch) {
      const int fiber = e.at("fiber").get<int>();
      const int aa = e.at("aa").get<int>();
      if (fiber < 1 || fiber > kFibers || aa < 1 || aa > kAasPerFiber) {
        throw Error(ErrorCode::kMalformedConfig, "calibration channel index out of range");
      }
      auto& f = m.fits[static_cast<std::size_t>((fiber - 1) * kAasPerFiber + aa - 1)];
      f.slope = e.at("slope_per_m_per_nm").get<double>();
      f.intercept = e.at("intercept_per_m").get<double>();
      f.residual_rms = e.at("residual_rms_per_m").get<double>();
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::kMalformedConfig, std::string("calibration map: ") + ex.what());
  }
  try {
    m.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kMalformedConfig, e.what());
  }
  return m;
}

std::string CalibrationMap::dump() const { return to_json().dump(2) + "\n"; }

void CalibrationJigSet::validate(double kappa_max) const {
  if (std::find(curvatures.begin(), curvatures.end(), 0.0) == curvatures.end()) {
    throw Error(ErrorCode::kInvalidArgument, "jig set must contain the straight jig");
  }
  for (double k : curvatures) {
    if (!std::isfinite(k) || std::abs(k) > kappa_max) {
      throw Error(ErrorCode::kInvalidArgument, "jig curvature beyond kappa_max");
    }
  }
}

CalibrationMap calibrate(const CalibrationJigSet& jigs, const std::vector<std::vector<WavelengthFrame>>& frames) {
  if (frames.size() != jigs.curvatures.size()) {
    throw Error(ErrorCode::kInvalidArgument, "one frame batch per jig is required");
  }
  const std::set<double> distinct(jigs.curvatures.begin(), jigs.curvatures.end());
  if (distinct.size() < 2) {
    throw Error(ErrorCode::kInsufficientJigs, "calibration needs at least two distinct jig curvatures");
  }
  for (std::size_t j = 0; j < frames.size(); ++j) {
    if (frames[j].empty()) throw Error(ErrorCode::kInsufficientJigs, "jig " + std::to_string(j) + " has no frames");
  }

  const std::size_t nj = jigs.curvatures.size();
  CalibrationMap map;
  for (int c = 0; c < kChannels; ++c) {
    std::vector<double> x(nj);
    for (std::size_t j = 0; j < nj; ++j) {
      double sum = 0.0;
      for (const auto& f : frames[j]) sum += f.shifts[static_cast<std::size_t>(c)];
      x[j] = sum / static_cast<double>(frames[j].size());
    }
    const auto& y = jigs.curvatures;
    double mx = 0.0, my = 0.0;
    for (std::size_t j = 0; j < nj; ++j) {
      mx += x[j];
      my += y[j];
    }
    mx /= static_cast<double>(nj);
    my /= static_cast<double>(nj);
    double sxx = 0.0, sxy = 0.0, scale = 0.0;
    for (std::size_t j = 0; j < nj; ++j) {
      sxx += (x[j] - mx) * (x[j] - mx);
      sxy += (x[j] - mx) * (y[j] - my);
      scale = std::max(scale, std::abs(x[j]));
    }
    if (!(sxx > 1e-24 * std::max(1.0, scale * scale) * static_cast<double>(nj))) {
      throw Error(ErrorCode::kDegenerateFit, "channel " + std::to_string(c) + " shows no wavelength change across jigs");
    }
    ChannelFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss = 0.0;
    for (std::size_t j = 0; j < nj; ++j) {
      const double r = y[j] - (fit.slope * x[j] + fit.intercept);
      ss += r * r;
    }
    fit.residual_rms = std::sqrt(ss / static_cast<double>(nj));
    if (fit.slope == 0.0 || !std::isfinite(fit.slope)) {
      throw Error(ErrorCode::kDegenerateFit, "channel " + std::to_string(c) + " has a zero slope");
    }
    map.fits[static_cast<std::size_t>(c)] = fit;
  }
  return map;
}

std::vector<std::vector<WavelengthFrame>> jig_frames(const FbgLayout& layout, const CalibrationJigSet& jigs,
                                                     int frames_per_jig, std::uint64_t seed) {
  FbgStream stream(layout, seed);
  std::vector<std::vector<WavelengthFrame>> out;
  for (double k : jigs.curvatures) {
    ChannelValues kappa;
    kappa.fill(k);
    std::vector<WavelengthFrame> batch;
    for (int i = 0; i < frames_per_jig; ++i) batch.push_back(stream.next(kappa));
    out.push_back(std::move(batch));
  }
  return out;
}

ChannelValues curvatures(const WavelengthFrame& frame, const CalibrationMap& map) {
  ChannelValues k{};
  for (std::size_t c = 0; c < kChannels; ++c) {
    k[c] = map.fits[c].slope * frame.shifts[c] + map.fits[c].intercept;
  }
  return k;
}

double curvature_profile_at(const std::array<double, 3>& kappa, const std::array<double, 3>& pos, double s) {
  if (s <= pos[0]) return kappa[0];
  if (s >= pos[2]) return kappa[2];
  const int seg = s < pos[1] ? 0 : 1;
  const double t = (s - pos[static_cast<std::size_t>(seg)]) /
                   (pos[static_cast<std::size_t>(seg + 1)] - pos[static_cast<std::size_t>(seg)]);
  return kappa[static_cast<std::size_t>(seg)] +
         t * (kappa[static_cast<std::size_t>(seg + 1)] - kappa[static_cast<std::size_t>(seg)]);
}

CurvatureSamples interpolate_curvature(const std::array<double, 3>& kappa, const std::array<double, 3>& pos,
                                       int n_per_segment, double total_length) {
  if (n_per_segment < 1) throw Error(ErrorCode::kInvalidArgument, "n_per_segment must be >= 1");
  if (!(pos[0] >= 0 && pos[0] < pos[1] && pos[1] < pos[2] && pos[2] <= total_length)) {
    throw Error(ErrorCode::kInvalidArgument, "AA positions must increase within the body");
  }
  CurvatureSamples out;
  auto add_region = [&](double a, double b, int steps) {
    if (b <= a || steps < 1) return;
    const double ds = (b - a) / steps;
    for (int i = 0; i < steps; ++i) {
      const double s = a + (i + 0.5) * ds;
      out.s.push_back(s);
      out.kappa.push_back(curvature_profile_at(kappa, pos, s));
      out.ds.push_back(ds);
    }
  };
  const double d_first = (pos[1] - pos[0]) / n_per_segment;
  const double d_last = (pos[2] - pos[1]) / n_per_segment;
  add_region(0.0, pos[0], std::max(1, static_cast<int>(std::lround(pos[0] / d_first))));
  add_region(pos[0], pos[1], n_per_segment);
  add_region(pos[1], pos[2], n_per_segment);
  add_region(pos[2], total_length, std::max(1, static_cast<int>(std::lround((total_length - pos[2]) / d_last))));
  return out;
}

std::vector<Point2> integrate_shape(const CurvatureSamples& samples) {
  std::vector<Point2> pts;
  pts.reserve(samples.s.size() + 1);
  Point2 p = Point2::Zero();
  pts.push_back(p);
  double phi = 0.0;  // tangent angle from +axial toward +lateral
  for (std::size_t i = 0; i < samples.s.size(); ++i) {
    const double ds = samples.ds[i];
    if (!(ds > 0)) throw Error(ErrorCode::kInvalidArgument, "integration step must be > 0");
    const double k = samples.kappa[i] * 1e-3;  // 1/mm
    const Point2 t(std::sin(phi), std::cos(phi));
    const Point2 nrm(std::cos(phi), -std::sin(phi));
    if (k == 0.0) {
      p += ds * t;
    } else {
      const double dth = k * ds;
      const double rho = 1.0 / k;
      const double half = std::sin(0.5 * dth);
      p += rho * std::sin(dth) * t + rho * 2.0 * half * half * nrm;
      phi += dth;
    }
    pts.push_back(p);
  }
  return pts;
}

ReconstructedShape reconstruct(const WavelengthFrame& frame, const CalibrationMap& map, const FbgLayout& layout,
                               double active_length, int n_per_segment) {
  const ChannelValues k = curvatures(frame, map);
  ReconstructedShape out;
  out.n_points_per_segment = n_per_segment;
  Point2 sum = Point2::Zero();
  for (int f = 0; f < kFibers; ++f) {
    const std::array<double, 3> kf{k[static_cast<std::size_t>(f * 3)], k[static_cast<std::size_t>(f * 3 + 1)],
                                   k[static_cast<std::size_t>(f * 3 + 2)]};
    out.fibers[static_cast<std::size_t>(f)] =
        integrate_shape(interpolate_curvature(kf, layout.aa_positions, n_per_segment, active_length));
    sum += out.fibers[static_cast<std::size_t>(f)].back();
  }
  out.tip = sum / kFibers;
  return out;
}

}  // namespace cdm
