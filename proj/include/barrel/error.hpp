#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace barrel {

enum class ErrorCode {
  kInvalidArgument,
  kZeroVector,
  kUnsupportedOrientation,
  kBisectionFailure,
  kEmptyRender,
  kTooFewPoints,
  kDegenerateNormals,
  kNoValidModel,
  kCollinearPoints,
  kEmptyCloud,
  kShapeMismatch,
  kNonFiniteGradient,
  kDivergedTraining,
  kEmptyTarget,
  kAllStartsFailed,
  kInvalidAlphas,
  kDimensionMismatch,
  kDegeneratePoints,
  kEmptyBarrelCloud,
  kEmptyFloorCloud,
  kMalformedPly,
  kSchemaError,
  kIoError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and tests) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace barrel
