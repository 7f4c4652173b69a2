#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ipdf {

// Base of every error raised by the library. Callers that only care about
// "something in ipdf failed" catch this; the CLI maps it to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateMatrix : public Error {
 public:
  using Error::Error;
};

class LevelTooLarge : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class QueryMissingGroundTruth : public Error {
 public:
  using Error::Error;
};

class EmptyModeSet : public Error {
 public:
  using Error::Error;
};

class MissingFullGroundTruth : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(std::size_t step, double value)
      : Error("non-finite training loss " + std::to_string(value) + " at step " +
              std::to_string(step)),
        step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace ipdf
