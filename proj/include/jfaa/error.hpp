#pragma once

#include <stdexcept>
#include <string>

namespace jfaa {

/// Invalid configuration or shape parameters.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (annotations, feature files, scores).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical or schema check that did not pass.
class CheckError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace jfaa
