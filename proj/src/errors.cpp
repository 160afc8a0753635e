#include "cdm/errors.hpp"

namespace cdm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kPullExceedsCurvatureLimit: return "PullExceedsCurvatureLimit";
    case ErrorCode::kNoConvergence: return "NoConvergence";
    case ErrorCode::kArcLengthOutOfRange: return "ArcLengthOutOfRange";
    case ErrorCode::kCurvatureOutOfRange: return "CurvatureOutOfRange";
    case ErrorCode::kInsufficientJigs: return "InsufficientJigs";
    case ErrorCode::kDegenerateFit: return "DegenerateFit";
    case ErrorCode::kInfeasible: return "Infeasible";
    case ErrorCode::kMaxIterations: return "MaxIterations";
    case ErrorCode::kIllConditioned: return "IllConditioned";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kSensorSilent: return "SensorSilent";
    case ErrorCode::kQpInfeasible: return "QpInfeasible";
    case ErrorCode::kDegenerateStep: return "DegenerateStep";
    case ErrorCode::kTraceTooShort: return "TraceTooShort";
    case ErrorCode::kNotInContact: return "NotInContact";
    case ErrorCode::kMalformedTrace: return "MalformedTrace";
    case ErrorCode::kMalformedConfig: return "MalformedConfig";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

}  // namespace cdm
