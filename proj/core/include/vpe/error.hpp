#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vpe {

enum class ErrorCode {
  InvalidArgument,
  CoincidentRobots,
  DisconnectedSwarm,
  PlacementFailure,
  ExcessiveTransfer,
  MaxIterationsExceeded,
  OverdrawnRobot,
  NotIrreducible,
  NoConvergence,
  InvalidAccuracy,
  SwarmFragmented,
  ConfigError,
  IoError,
};

/// Coarse classification used by the command line tool to pick an exit code.
enum class ErrorCategory { Config, Numerical, Fragmentation, Other };

std::string_view to_string(ErrorCode code) noexcept;
ErrorCategory category_of(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }

 private:
  ErrorCode code_;
};

/// Raised when a robot would hand out at least as many VPs as it owns.
/// Carries the worst offender so callers can report it.
class ExcessiveTransferError : public Error {
 public:
  ExcessiveTransferError(int robot, double exit_sum);

  int robot() const noexcept { return robot_; }
  double exit_sum() const noexcept { return exit_sum_; }

 private:
  int robot_;
  double exit_sum_;
};

}  // namespace vpe
