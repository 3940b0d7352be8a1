#pragma once

#include <stdexcept>
#include <string>

namespace ngramgrad {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unknown configuration, or a missing input file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A loss or gradient became non-finite during training.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace ngramgrad
