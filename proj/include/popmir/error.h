#pragma once

#include <stdexcept>
#include <string>

namespace popmir {

/// Input violated a documented precondition (bad file row, wrong shape,
/// unknown name). The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// Failure while doing work on valid input (I/O, solver trouble).
/// The CLI maps this to exit code 1.
class RuntimeError : public std::runtime_error {
 public:
  explicit RuntimeError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace popmir
