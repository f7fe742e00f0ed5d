#pragma once

#include <stdexcept>
#include <string>

namespace stackmi {

// Base for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input data or configuration.
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(what) {}
};

// Numerical failure: singular design, non-convergence, separation.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(what) {}
};

}  // namespace stackmi
