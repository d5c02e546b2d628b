#pragma once

#include <stdexcept>
#include <string>

namespace aftmed {

// Malformed input data: CSV parse failures, schema violations, invalid rows.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Model fitting failures: rank-deficient design, non-finite start, bootstrap
// drop rate over budget.
class FitError : public std::runtime_error {
 public:
  explicit FitError(const std::string& what) : std::runtime_error(what) {}
};

// Simulation-study failures: censoring calibration off target, replicate
// non-convergence over budget.
class SimulationError : public std::runtime_error {
 public:
  explicit SimulationError(const std::string& what) : std::runtime_error(what) {}
};

// Adaptive quadrature could not reach the requested tolerance.
class QuadratureError : public std::runtime_error {
 public:
  explicit QuadratureError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace aftmed
