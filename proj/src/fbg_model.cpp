#include "cdm/fbg_model.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "cdm/errors.hpp"

namespace cdm {

void FbgLayout::validate(double active_length) const {
  auto bad = [](const std::string& w) { throw Error(ErrorCode::kInvalidArgument, "FbgLayout: " + w); };
  for (int i = 0; i < kAasPerFiber; ++i) {
    const double s = aa_positions[static_cast<std::size_t>(i)];
    if (!(s >= 0 && s <= active_length)) bad("AA position outside the active length");
    if (i > 0 && !(s > aa_positions[static_cast<std::size_t>(i - 1)])) bad("AA positions must increase");
    if (!(bragg_wavelengths[static_cast<std::size_t>(i)] > 0)) bad("Bragg wavelength must be > 0");
  }
  if (!(strain_coefficient > 0)) bad("strain coefficient must be > 0");
  if (sensor_bias[0] == 0.0 || sensor_bias[1] == 0.0) bad("sensor bias must be nonzero");
  if ((sensor_bias[0] > 0) == (sensor_bias[1] > 0)) bad("fiber biases must have opposite signs");
  if (!(noise_sigma >= 0)) bad("noise sigma must be >= 0");
  if (!(sample_rate > 0)) bad("sample rate must be > 0");
  if (!std::isfinite(thermal_offset)) bad("thermal offset must be finite");
}

WavelengthFrame shifts_from_curvature(const FbgLayout& layout, const ChannelValues& kappa, Rng& rng,
                                      std::uint64_t seq) {
  WavelengthFrame f;
  f.seq = seq;
  f.timestamp = static_cast<double>(seq) / layout.sample_rate;
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int c = 0; c < kChannels; ++c) {
    const double k = kappa[static_cast<std::size_t>(c)];
    if (!(std::abs(k) <= layout.kappa_max * (1.0 + 1e-12))) {
      throw Error(ErrorCode::kCurvatureOutOfRange,
                  "curvature " + std::to_string(k) + " 1/m on channel " + std::to_string(c) + " exceeds kappa_max");
    }
    // strain = bias[mm] * 1e-3 * kappa[1/m]
    double shift = layout.bragg(c) * (layout.strain_coefficient * layout.bias(c) * 1e-3 * k) + layout.thermal_offset;
    if (layout.noise_sigma > 0) shift += layout.noise_sigma * noise(rng);
    f.shifts[static_cast<std::size_t>(c)] = shift;
  }
  return f;
}

WavelengthFrame shifts_from_curvature(const FbgLayout& layout, const ChannelValues& kappa,
                                      std::uint64_t rng_seed, std::uint64_t seq) {
  Rng rng(rng_seed);
  return shifts_from_curvature(layout, kappa, rng, seq);
}

ChannelValues sensed_curvatures(const CdmConfig& config, const CdmState& state, const FbgLayout& layout) {
  ChannelValues out{};
  for (int f = 0; f < kFibers; ++f) {
    for (int a = 0; a < kAasPerFiber; ++a) {
      // The simulator's positive bend is toward -lateral.
      out[static_cast<std::size_t>(f * kAasPerFiber + a)] =
          -curvature_at(config, state, layout.aa_positions[static_cast<std::size_t>(a)]);
    }
  }
  return out;
}

FbgStream::FbgStream(FbgLayout layout, std::uint64_t seed) : layout_(std::move(layout)), rng_(seed) {}

WavelengthFrame FbgStream::next(const ChannelValues& kappa) {
  return shifts_from_curvature(layout_, kappa, rng_, seq_++);
}

std::vector<WavelengthFrame> FbgStream::stream(double span, const std::function<ChannelValues(double)>& provider) {
  if (!(span >= 0)) throw Error(ErrorCode::kInvalidArgument, "stream span must be >= 0");
  // Frames with timestamp in [start, start + span); the small slack keeps
  // span * rate from losing a frame to rounding.
  const auto count = static_cast<std::uint64_t>(std::ceil(span * layout_.sample_rate - 1e-9));
  std::vector<WavelengthFrame> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const double t = static_cast<double>(seq_) / layout_.sample_rate;
    out.push_back(next(provider(t)));
  }
  return out;
}

std::string frame_csv_header() { return "seq,timestamp,dl11,dl12,dl13,dl21,dl22,dl23"; }

std::string frame_to_csv(const WavelengthFrame& f) {
  std::string line = std::to_string(f.seq);
  char buf[64];
  std::snprintf(buf, sizeof buf, ",%.9g", f.timestamp);
  line += buf;
  for (double v : f.shifts) {
    std::snprintf(buf, sizeof buf, ",%.9g", v);
    line += buf;
  }
  return line;
}

void write_frames_csv(std::ostream& out, const std::vector<WavelengthFrame>& frames) {
  out << frame_csv_header() << '\n';
  for (const auto& f : frames) out << frame_to_csv(f) << '\n';
}

std::vector<WavelengthFrame> read_frames_csv(std::istream& in) {
  std::vector<WavelengthFrame> frames;
  std::string line;
  int lineno = 0;
  auto bad = [&](const std::string& w) {
    throw Error(ErrorCode::kMalformedTrace, "frames line " + std::to_string(lineno) + ": " + w);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (lineno == 1 || line.rfind("seq,", 0) == 0) {
      if (line != frame_csv_header()) bad("unexpected header");
      continue;
    }
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 2 + kChannels) bad("expected 8 columns, got " + std::to_string(cells.size()));
    WavelengthFrame f;
    try {
      std::size_t used = 0;
      f.seq = std::stoull(cells[0], &used);
      if (used != cells[0].size()) bad("column 1 is not an integer");
      for (std::size_t c = 1; c < cells.size(); ++c) {
        const double v = std::stod(cells[c], &used);
        if (used != cells[c].size()) bad("column " + std::to_string(c + 1) + " is not a number");
        if (c == 1) f.timestamp = v; else f.shifts[c - 2] = v;
      }
    } catch (const std::logic_error&) {
      bad("unparseable number");
    }
    if (!frames.empty() && f.seq <= frames.back().seq) bad("seq must increase");
    frames.push_back(f);
  }
  return frames;
}

}  // namespace cdm
