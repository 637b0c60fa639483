#pragma once

#include <stdexcept>
#include <string>

namespace ltm {

// Malformed or inconsistent input data (files, datasets, variable sets).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Structurally invalid models or model documents.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Zero-probability evidence, undefined distances, exceeded enumeration guards.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ltm
