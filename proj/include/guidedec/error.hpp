#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace guidedec {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model backend (table, remote) failed to produce scores.
class BackendError : public Error {
 public:
  using Error::Error;
};

/// Raised by the decoder when a step fails; carries the step index.
class StepError : public Error {
 public:
  StepError(std::size_t step, const std::string& what)
      : Error("step " + std::to_string(step) + ": " + what), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace guidedec
