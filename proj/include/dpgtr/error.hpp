#pragma once

#include <stdexcept>
#include <string>

namespace dpgtr {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// A requested mechanism or strategy exists in the contract but has no
// implementation in this build.
class NotAvailableError : public Error {
 public:
  using Error::Error;
};

// Malformed configuration or input files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace dpgtr
