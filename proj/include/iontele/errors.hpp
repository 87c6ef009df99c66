#pragma once

#include <stdexcept>
#include <string>

namespace iontele {

// Dimensions of operands disagree (subsystem products, qubit-only calls...).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A numerical invariant of a produced value failed its check. The CLI maps
// this to exit code 3.
class InvariantViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Population reached the top Fock level of the truncated motional mode.
class LeakageError : public InvariantViolation {
 public:
  using InvariantViolation::InvariantViolation;
};

// An iterative estimator exhausted its budget. The CLI maps this to exit code 4.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace iontele
