#pragma once

#include <stdexcept>
#include <string>

namespace cvar_mdp {

/// Argument outside the mathematical domain of an operation (alpha not in (0,1], y not in [0,1], ...).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An input violated a structural assumption the algorithms rely on, e.g. a
/// value table whose y*V(x, y) is not concave.
class StructuralError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed input file. The message names the offending line or field.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An exhaustive enumeration would exceed its size guard.
class SizeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cvar_mdp
