#pragma once

#include <stdexcept>
#include <string>

namespace alora {

// Base of every error thrown by the library. The CLI maps each subclass onto
// a fixed exit code (config/shape -> 2, data -> 3, numeric -> 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace alora
