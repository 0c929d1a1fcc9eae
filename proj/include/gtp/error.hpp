#pragma once

#include <stdexcept>
#include <string>

namespace gtp {

// Shape disagreement between tensors / matrices.
class DimensionError : public std::runtime_error {
 public:
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller violated a documented precondition.
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Malformed or inconsistent input data (annotation files, rasters, configs).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values appeared where finite math was expected.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Scene preparation produced an unusable scene (e.g. zero destinations).
class SceneError : public std::runtime_error {
 public:
  explicit SceneError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gtp
