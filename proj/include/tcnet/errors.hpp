#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tcnet {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define TCNET_DEFINE_ERROR(Name)              \
  class Name : public Error {                 \
   public:                                    \
    using Error::Error;                       \
  }

TCNET_DEFINE_ERROR(ShapeMismatch);
TCNET_DEFINE_ERROR(NonScalarLoss);
TCNET_DEFINE_ERROR(NonSymmetricInput);
TCNET_DEFINE_ERROR(InvalidRotation);
TCNET_DEFINE_ERROR(DegenerateGeometry);
TCNET_DEFINE_ERROR(OutOfRange);
TCNET_DEFINE_ERROR(UnknownElement);
TCNET_DEFINE_ERROR(InvalidTensor);
TCNET_DEFINE_ERROR(EmptyDataset);
TCNET_DEFINE_ERROR(LengthMismatch);
TCNET_DEFINE_ERROR(ConfigError);
TCNET_DEFINE_ERROR(CheckpointError);
TCNET_DEFINE_ERROR(DivergenceDetected);

#undef TCNET_DEFINE_ERROR

// `line` is 1-based; 0 means the error is not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace tcnet
