#pragma once

#include <stdexcept>
#include <string>

namespace active {

// Bad caller input: shape mismatches, malformed files, out-of-contract values.
// The CLI maps this family to exit code 2.
class InputError : public std::invalid_argument {
  public:
    explicit InputError(const std::string& msg) : std::invalid_argument(msg) {}
};

class ShapeError : public InputError {
  public:
    explicit ShapeError(const std::string& msg) : InputError(msg) {}
};

// Non-finite losses, diverged training. Exit code 3.
class NumericalError : public std::runtime_error {
  public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Broken internal invariants (e.g. a cyclic graph). Never caller-recoverable.
class InternalError : public std::logic_error {
  public:
    explicit InternalError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace active
