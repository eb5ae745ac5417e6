#include "vpe/error.hpp"

#include <fmt/format.h>

namespace vpe {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::CoincidentRobots: return "CoincidentRobots";
    case ErrorCode::DisconnectedSwarm: return "DisconnectedSwarm";
    case ErrorCode::PlacementFailure: return "PlacementFailure";
    case ErrorCode::ExcessiveTransfer: return "ExcessiveTransfer";
    case ErrorCode::MaxIterationsExceeded: return "MaxIterationsExceeded";
    case ErrorCode::OverdrawnRobot: return "OverdrawnRobot";
    case ErrorCode::NotIrreducible: return "NotIrreducible";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::InvalidAccuracy: return "InvalidAccuracy";
    case ErrorCode::SwarmFragmented: return "SwarmFragmented";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

ErrorCategory category_of(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::CoincidentRobots:
    case ErrorCode::DisconnectedSwarm:
    case ErrorCode::PlacementFailure:
    case ErrorCode::ConfigError:
      return ErrorCategory::Config;
    case ErrorCode::ExcessiveTransfer:
    case ErrorCode::MaxIterationsExceeded:
    case ErrorCode::OverdrawnRobot:
    case ErrorCode::NotIrreducible:
    case ErrorCode::NoConvergence:
    case ErrorCode::InvalidAccuracy:
      return ErrorCategory::Numerical;
    case ErrorCode::SwarmFragmented:
      return ErrorCategory::Fragmentation;
    case ErrorCode::IoError:
      return ErrorCategory::Other;
  }
  return ErrorCategory::Other;
}

ExcessiveTransferError::ExcessiveTransferError(int robot, double exit_sum)
    : Error(ErrorCode::ExcessiveTransfer,
            fmt::format("robot {} would transfer a fraction {:.6g} >= 1 of its "
                        "VPs in one round",
                        robot, exit_sum)),
      robot_(robot),
      exit_sum_(exit_sum) {}

}  // namespace vpe
