#pragma once

#include <stdexcept>
#include <string>

namespace reluopt {

/// Array/matrix dimensions that do not chain together.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of a function (e.g. x >= x~).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A model, plan or configuration violates one of its invariants.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A surrogate method was paired with a network of the wrong kind.
class KindMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values appeared during training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace reluopt
