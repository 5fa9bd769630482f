#pragma once

#include <stdexcept>
#include <string>

namespace mmf {

// Malformed or inconsistent market data, features, or scaling inputs.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape mismatches and invalid network/model specifications.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mmf
