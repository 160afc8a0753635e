#pragma once

// Forward FBG sensor model: two fibers on opposite sides of the body, three
// active areas (AAs) each. A positive curvature bends toward +lateral.

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "cdm/cdm_sim.hpp"

namespace cdm {

constexpr int kFibers = 2;
constexpr int kAasPerFiber = 3;
constexpr int kChannels = kFibers * kAasPerFiber;

// Channel order: fiber 1 AA 1..3, then fiber 2 AA 1..3.
using ChannelValues = std::array<double, kChannels>;

struct FbgLayout {
  std::array<double, kAasPerFiber> aa_positions{8.0, 18.0, 28.0};              // mm
  std::array<double, kAasPerFiber> bragg_wavelengths{1535.0, 1545.0, 1555.0};  // nm
  double strain_coefficient = 0.78;
  std::array<double, kFibers> sensor_bias{0.05, -0.05};  // mm, signed per fiber
  double noise_sigma = 0.001;                            // nm
  double sample_rate = 200.0;                            // Hz
  double thermal_offset = 0.0;                           // nm, added to every shift
  double kappa_max = 166.7;                              // 1/m, accepted input range

  void validate(double active_length) const;
  double bragg(int channel) const { return bragg_wavelengths[static_cast<std::size_t>(channel % kAasPerFiber)]; }
  double bias(int channel) const { return sensor_bias[static_cast<std::size_t>(channel / kAasPerFiber)]; }
};

struct WavelengthFrame {
  std::uint64_t seq = 0;
  double timestamp = 0.0;  // s
  ChannelValues shifts{};  // nm
};

using Rng = std::mt19937_64;

// One frame from per-channel curvature (1/m). Noise is drawn from `rng`.
WavelengthFrame shifts_from_curvature(const FbgLayout& layout, const ChannelValues& kappa, Rng& rng,
                                      std::uint64_t seq = 0);
WavelengthFrame shifts_from_curvature(const FbgLayout& layout, const ChannelValues& kappa,
                                      std::uint64_t rng_seed, std::uint64_t seq = 0);

// Curvature each channel sees on a simulated body. Both fibers sample the
// centerline at the AA arc positions.
ChannelValues sensed_curvatures(const CdmConfig& config, const CdmState& state, const FbgLayout& layout);

// Interrogator clock. Owns its counter and generator; single owner.
class FbgStream {
 public:
  FbgStream(FbgLayout layout, std::uint64_t seed);

  // Frames covering [now, now + span) of simulated time, one per sample
  // period. `provider` returns channel curvatures at a given time.
  std::vector<WavelengthFrame> stream(double span, const std::function<ChannelValues(double)>& provider);

  // Emits the next frame in sequence.
  WavelengthFrame next(const ChannelValues& kappa);

  std::uint64_t next_seq() const { return seq_; }
  double period() const { return 1.0 / layout_.sample_rate; }
  const FbgLayout& layout() const { return layout_; }

 private:
  FbgLayout layout_;
  Rng rng_;
  std::uint64_t seq_ = 0;
};

// CSV: seq,timestamp,dl11,dl12,dl13,dl21,dl22,dl23 with 9 significant digits.
std::string frame_csv_header();
std::string frame_to_csv(const WavelengthFrame& frame);
void write_frames_csv(std::ostream& out, const std::vector<WavelengthFrame>& frames);
std::vector<WavelengthFrame> read_frames_csv(std::istream& in);

}  // namespace cdm
