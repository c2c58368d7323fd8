#pragma once

#include <stdexcept>
#include <string>

namespace cpba {

enum class ErrorCode {
  kInvalidInput,
  kDegenerateLine,
  kRayParallelToPlane,
  kDegenerateIntersection,
  kLowParallax,
  kBehindCamera,
  kDegenerateProjection,
  kEmptyProblem,
  kRankDeficient,
  kInvalidInitialization,
  kSceneGeneration,
  kConfigParse,
};

const char* to_string(ErrorCode code);

// Every recoverable failure in the library is reported through this type; the
// code lets callers distinguish e.g. a transient behind-camera edge from a
// malformed config.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cpba
