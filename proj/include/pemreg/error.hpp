#pragma once

#include <stdexcept>
#include <string>

namespace pemreg {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data (files, configuration, series).
class InputError : public Error {
 public:
  using Error::Error;
};

/// A numerical routine could not produce a valid result.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace pemreg
