#include "cdm/rig.hpp"

#include <cmath>

#include "cdm/errors.hpp"

namespace cdm {

SimRig::SimRig(CdmConfig config, std::vector<Obstacle> obstacles, FbgLayout layout, std::uint64_t seed,
               RigOptions options)
    : config_(std::move(config)),
      obstacles_(std::move(obstacles)),
      options_(options),
      stream_(std::move(layout), seed) {
  config_.validate();
  if (!(options_.cable_velocity > 0)) throw Error(ErrorCode::kInvalidArgument, "cable velocity must be > 0");
  stream_.layout().validate(config_.active_length);
  for (const auto& ob : obstacles_) ob.validate(config_);
  const double ratio = stream_.layout().sample_rate / options_.control_rate;
  if (!(ratio >= 1.0) || std::abs(ratio - std::round(ratio)) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "control rate must divide the sensor rate");
  }
  samples_per_tick_ = static_cast<std::uint64_t>(std::llround(ratio));
  state_ = equilibrium(config_, Pull::Zero(), obstacles_, options_.equilibrium);
  // First frame at t = 0 so the controller has a reading before moving.
  mailbox_.put(stream_.next(sensed_curvatures(config_, state_, stream_.layout())));
}

double SimRig::now() const {
  // The last emitted frame marks the current time.
  return static_cast<double>(stream_.next_seq() - 1) / stream_.layout().sample_rate;
}

bool SimRig::try_solve(const CdmState& from, const Pull& pull, CdmState& out) const {
  try {
    out = equilibrium_from(config_, from, pull, obstacles_, options_.equilibrium);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kPullExceedsCurvatureLimit) throw;
    return false;
  }
  if (obstacles_.empty()) return true;
  const double rated = free_tension_at_cap(config_, 0.0);
  if (cable_tension(config_, out, obstacles_) > options_.stall_tension_ratio * rated) return false;
  return cap_reaction(config_, out, obstacles_) <= options_.stall_cap_reaction * rated * config_.cable_offset;
}

CdmState SimRig::solve_saturating(const Pull& dl, bool& saturated) {
  saturated = false;
  CdmState cur = state_;
  CdmState next;
  // Advance in short pieces so the drive stops at the first piece that
  // meets the curvature or tension limit instead of solving far past it.
  const int pieces =
      obstacles_.empty() ? 1 : std::max(1, static_cast<int>(std::ceil(dl.cwiseAbs().maxCoeff() / kStallPiece)));
  const Pull start = state_.cable_pull;
  for (int j = 1; j <= pieces; ++j) {
    const Pull target = start + dl * (static_cast<double>(j) / pieces);
    if (try_solve(cur, target, next)) {
      cur = next;
      continue;
    }
    saturated = true;
    const Pull from = cur.cable_pull;
    double lo = 0.0, hi = 1.0;
    CdmState base = cur;
    for (int i = 0; i < 30; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (try_solve(base, from + mid * (target - from), next)) {
        cur = next;
        lo = mid;
      } else {
        hi = mid;
      }
    }
    break;
  }
  return cur;
}

void SimRig::emit_until(std::uint64_t last_index, const CdmState& before, const CdmState& after,
                        std::uint64_t switch_index) {
  const ChannelValues k_before = sensed_curvatures(config_, before, stream_.layout());
  const ChannelValues k_after = sensed_curvatures(config_, after, stream_.layout());
  while (stream_.next_seq() <= last_index) {
    const bool done = stream_.next_seq() >= switch_index;
    mailbox_.put(stream_.next(done ? k_after : k_before));
  }
}

void SimRig::actuate(const Pull& dl) {
  if (!dl.allFinite()) throw Error(ErrorCode::kInvalidArgument, "non-finite cable command");
  const double rate = stream_.layout().sample_rate;
  const std::uint64_t current = stream_.next_seq() - 1;

  bool saturated = false;
  const CdmState before = state_;
  CdmState after = (dl(0) == 0.0 && dl(1) == 0.0) ? state_ : solve_saturating(dl, saturated);
  const double elapsed = dl.cwiseAbs().maxCoeff() / options_.cable_velocity;

  // Completion sample and the first control tick strictly after now and at
  // or after completion.
  const auto done = current + static_cast<std::uint64_t>(std::ceil(elapsed * rate - 1e-9));
  std::uint64_t tick = (current / samples_per_tick_ + 1) * samples_per_tick_;
  while (tick < done) tick += samples_per_tick_;
  state_ = after;
  emit_until(tick, before, after, done);

  TruthRecord t;
  t.commanded = dl;
  t.pull = state_.cable_pull;
  t.tip = state_.tip;
  t.contact_active = state_.contact_active;
  for (double p : state_.penetration) t.max_penetration = std::max(t.max_penetration, p);
  t.saturated = saturated;
  t.time = now();
  truth_.push_back(std::move(t));
}

FbgTipSensor::FbgTipSensor(Mailbox<WavelengthFrame>& mailbox, CalibrationMap map, FbgLayout layout,
                           double active_length, int n_per_segment)
    : mailbox_(mailbox), map_(std::move(map)), layout_(std::move(layout)), active_length_(active_length),
      n_per_segment_(n_per_segment) {
  map_.validate();
}

std::optional<TipSample> FbgTipSensor::latest() {
  const auto frame = mailbox_.get();
  if (!frame) return std::nullopt;
  if (last_sample_ && last_frame_ && last_frame_->seq == frame->seq) return last_sample_;
  last_frame_ = frame;
  TipSample s;
  s.tip = reconstruct(*frame, map_, layout_, active_length_, n_per_segment_).tip;
  s.timestamp = frame->timestamp;
  s.seq = frame->seq;
  last_sample_ = s;
  return s;
}

}  // namespace cdm
