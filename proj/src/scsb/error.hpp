#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace scsb {

enum class ErrorCode {
  InvalidArgument,
  Domain,
  GridMismatch,
  GridTooNarrow,
  InterpolationRefused,
  Truncation,
  RatioUnbounded,
  Degenerate,
  Support,
  Infeasible,
  Stall,
  NonConvergence,
  Divergence,
  TruncationMismatch,
  FitDegenerate,
  Nondifferentiable,
  Config,
  Io,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Error that carries the last iterate (or trace) of a failed iterative solve.
template <class Payload>
class PayloadError : public Error {
 public:
  PayloadError(ErrorCode code, const std::string& message, Payload payload)
      : Error(code, message), payload_(std::move(payload)) {}
  const Payload& payload() const noexcept { return payload_; }

 private:
  Payload payload_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace scsb
