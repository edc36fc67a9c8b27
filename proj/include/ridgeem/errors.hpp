#pragma once

#include <stdexcept>
#include <string>

namespace ridgeem {

// A prior or marginal covariance that failed to factor as positive definite.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure inside an iterative numerical routine. Carries the EM iteration
// index when raised from em_fit (-1 otherwise).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, int iteration = -1)
      : std::runtime_error(what), iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

// Malformed input files or inconsistent shapes coming from outside the library.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ridgeem
