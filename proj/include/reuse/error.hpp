#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace reuse {

enum class ErrorCode {
  RankDeficient,
  DimensionMismatch,
  InfeasibleAngles,
  NegativeTime,
  NonFiniteIntegrand,
  SingularCovariance,
  NotGaussian,
  RankConditionViolated,
  IllConditioned,
  KOutOfRange,
  Diverged,
  InvalidArgument,
  ConfigInvalid,
  IoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace reuse
