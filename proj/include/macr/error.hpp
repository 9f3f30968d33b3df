#pragma once

#include <stdexcept>
#include <string>

namespace macr {

// Root of every error thrown by the library. The CLI maps subclasses to exit
// codes, so new error kinds should derive from one of the two below.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input or configuration detected before any pipeline work starts.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Failure while running a pipeline stage.
class PipelineError : public Error {
 public:
  using Error::Error;
};

}  // namespace macr
