#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cdm {

enum class ErrorCode {
  kInvalidArgument,
  // cdm_sim
  kPullExceedsCurvatureLimit,
  kNoConvergence,
  kArcLengthOutOfRange,
  // fbg_model
  kCurvatureOutOfRange,
  // shape_recon
  kInsufficientJigs,
  kDegenerateFit,
  // qp_core
  kInfeasible,
  kMaxIterations,
  kIllConditioned,
  kRankDeficient,
  // controller
  kSensorSilent,
  kQpInfeasible,
  kDegenerateStep,
  // collision
  kTraceTooShort,
  kNotInContact,
  // harness
  kMalformedTrace,
  kMalformedConfig,
  kIo,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cdm
