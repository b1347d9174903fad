#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace polytx {

enum class ErrorCode {
  EmptyInput,
  EmptyCorpus,
  BadMaxLen,
  ParseError,
  ShapeMismatch,
  AllIgnored,
  AllUnobserved,
  NotScalar,
  NotOnGraph,
  NonFiniteGradient,
  BadStep,
  BadConfig,
  TooFewSamples,
  DegenerateRange,
  ConstantTruth,
  EmptyTestSet,
  DegenerateData,
  MissingResults,
  BadFormat,
  IoError,
};

std::string_view error_code_name(ErrorCode code);

// All library failures are reported through this type; the code is stable
// and machine-readable, the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace polytx
