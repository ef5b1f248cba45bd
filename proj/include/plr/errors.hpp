#pragma once

#include <stdexcept>
#include <string>

namespace plr {

enum class ErrorKind {
  kInvalidParameter,
  kDomain,
  kTransformOverflow,
  kDegenerateWeights,
  kInfeasibleState,
  kNumeric,
  kEmptyChain,
  kInsufficientData,
  kUndefinedMetric,
  kShapeMismatch,
  kSamplerStall,
  kParse,
  kConfig,
  kIo,
};

const char* to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so the CLI can map it
// onto a distinct exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace plr
