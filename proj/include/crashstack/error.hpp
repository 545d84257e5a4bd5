#ifndef CRASHSTACK_ERROR_HPP_
#define CRASHSTACK_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace crashstack {

// Base of every library error. The category drives the CLI exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const { return 1; }
};

// Malformed or inconsistent configuration (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

// Input data violates a schema or domain invariant (exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 3; }
};

// A numerical routine failed: rank deficiency, divergence, degenerate input
// (exit code 4).
class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 4; }
};

}  // namespace crashstack

#endif  // CRASHSTACK_ERROR_HPP_
