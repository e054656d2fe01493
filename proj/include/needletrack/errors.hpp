#pragma once

#include <stdexcept>

namespace needletrack {

/// A configuration value violates its documented constraint.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data (files, records, poses, images) is malformed or inconsistent.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace needletrack
