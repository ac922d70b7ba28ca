#pragma once

#include <stdexcept>
#include <string>

namespace qmem {

/// Malformed or inconsistent input: shapes, non-finite numbers, broken invariants.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The model is well-formed but a mathematical precondition of the requested
/// analysis does not hold (trivial reference, zero noise rate, no steady state).
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A dense representation does not close under multiplication, or its
/// variables are linearly dependent together with the identity.
class RepresentationError : public std::runtime_error {
 public:
  enum class Kind { NotInAffineSpan, DegenerateBasis };

  RepresentationError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Numerical integration or internal consistency failure.
class IntegrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qmem
