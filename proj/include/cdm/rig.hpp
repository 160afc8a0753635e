#pragma once

// Simulated bench: the CDM simulator behind cable drives, an FBG
// interrogator on its own clock, and a latest-value mailbox between the
// interrogator and the controller.

#include <array>
#include <atomic>
#include <cstdint>
#include <optional>
#include <vector>

#include "cdm/cdm_sim.hpp"
#include "cdm/controller.hpp"
#include "cdm/fbg_model.hpp"
#include "cdm/shape_recon.hpp"

namespace cdm {

// Single-writer single-reader latest-value slot (triple buffer). put() never
// blocks or waits on the reader; get() returns the most recent complete value.
template <typename T>
class Mailbox {
 public:
  void put(const T& value) {
    slots_[static_cast<std::size_t>(back_)] = value;
    const int prev = middle_.exchange(back_ | kFresh, std::memory_order_acq_rel);
    back_ = prev & kIndex;
  }

  std::optional<T> get() {
    if (middle_.load(std::memory_order_acquire) & kFresh) {
      const int prev = middle_.exchange(front_, std::memory_order_acq_rel);
      front_ = prev & kIndex;
      has_value_ = true;
    }
    if (!has_value_) return std::nullopt;
    return slots_[static_cast<std::size_t>(front_)];
  }

 private:
  static constexpr int kFresh = 4;
  static constexpr int kIndex = 3;
  std::array<T, 3> slots_{};
  int back_ = 0;                 // writer owned
  std::atomic<int> middle_{1};   // shared
  int front_ = 2;                // reader owned
  bool has_value_ = false;       // reader owned
};

struct RigOptions {
  double control_rate = 100.0;   // Hz, must divide the sensor rate
  double cable_velocity = 0.05;  // mm/s
  // Drive tension rating as a multiple of the tension that bends the
  // unloaded free body to the curvature cap.
  double stall_tension_ratio = 2.08;
  // The drive also stops once an obstacle presses a joint against its
  // curvature stop harder than this fraction of the moment at the cap.
  double stall_cap_reaction = 0.05;
  EquilibriumOptions equilibrium;
};

// Ground truth after each actuation.
struct TruthRecord {
  Pull commanded = Pull::Zero();
  Pull pull = Pull::Zero();  // achieved cumulative pull
  Point2 tip = Point2::Zero();
  std::vector<bool> contact_active;
  double max_penetration = 0.0;
  bool saturated = false;  // drive stalled at the curvature or tension limit
  double time = 0.0;
};

class SimRig : public Plant {
 public:
  SimRig(CdmConfig config, std::vector<Obstacle> obstacles, FbgLayout layout, std::uint64_t seed,
         RigOptions options = {});

  void actuate(const Pull& dl) override;
  Pull pull() const override { return state_.cable_pull; }
  double now() const override;

  Mailbox<WavelengthFrame>& mailbox() { return mailbox_; }
  const CdmState& state() const { return state_; }
  const CdmConfig& config() const { return config_; }
  const std::vector<Obstacle>& obstacles() const { return obstacles_; }
  const std::vector<TruthRecord>& truth() const { return truth_; }
  const FbgLayout& layout() const { return stream_.layout(); }

 private:
  void emit_until(std::uint64_t sample_index, const CdmState& before, const CdmState& after,
                  std::uint64_t switch_index);
  CdmState solve_saturating(const Pull& dl, bool& saturated);
  bool try_solve(const CdmState& from, const Pull& pull, CdmState& out) const;

  static constexpr double kStallPiece = 0.05;  // mm

  CdmConfig config_;
  std::vector<Obstacle> obstacles_;
  RigOptions options_;
  FbgStream stream_;
  Mailbox<WavelengthFrame> mailbox_;
  CdmState state_;
  std::uint64_t samples_per_tick_ = 2;
  std::vector<TruthRecord> truth_;
};

// Tip from the latest mailbox frame through the calibrated reconstruction.
class FbgTipSensor : public TipSensor {
 public:
  FbgTipSensor(Mailbox<WavelengthFrame>& mailbox, CalibrationMap map, FbgLayout layout, double active_length,
               int n_per_segment = 10);

  std::optional<TipSample> latest() override;
  double sample_period() const override { return 1.0 / layout_.sample_rate; }
  const std::optional<WavelengthFrame>& last_frame() const { return last_frame_; }

 private:
  Mailbox<WavelengthFrame>& mailbox_;
  CalibrationMap map_;
  FbgLayout layout_;
  double active_length_;
  int n_per_segment_;
  std::optional<WavelengthFrame> last_frame_;
  std::optional<TipSample> last_sample_;
};

}  // namespace cdm
