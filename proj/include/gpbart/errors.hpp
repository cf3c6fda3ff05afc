#pragma once

#include <stdexcept>
#include <string>

namespace gpbart {

// Bad input or configuration; the CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Linear algebra or likelihood failure; the CLI maps this to exit code 2.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gpbart
