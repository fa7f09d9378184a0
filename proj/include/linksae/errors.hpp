#pragma once

#include <stdexcept>
#include <string>

namespace linksae {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent user input (config, schema, file contents).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Singular design, infeasible constraint, and similar numerical failures.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace linksae
