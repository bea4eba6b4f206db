#pragma once

#include <stdexcept>
#include <string>

namespace elearn {

// Malformed or inconsistent input data (files, matrices, labels).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical breakdown: singular systems, diverging iterations, indefinite
// information matrices.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace elearn
