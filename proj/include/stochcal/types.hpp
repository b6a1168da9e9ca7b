#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>

namespace stochcal {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user input: unknown ids, malformed configs, missing files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Vector or matrix arguments whose sizes do not match the model layout.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown (non-finite filter state, degenerate covariance, ...).
class NumericalError : public Error {
 public:
  using Error::Error;
};

class DegenerateCovariance : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Raised by the filter when a forecast or analysis produces a non-finite
/// or non-positive quantity. Carries the grid index at which it happened.
class FilterDivergence : public NumericalError {
 public:
  FilterDivergence(const std::string& what, std::size_t grid_index)
      : NumericalError(what + " (grid index " + std::to_string(grid_index) + ")"),
        grid_index_(grid_index) {}

  std::size_t grid_index() const noexcept { return grid_index_; }

 private:
  std::size_t grid_index_;
};

inline void require_size(Eigen::Index actual, Eigen::Index expected, const char* what) {
  if (actual != expected) {
    throw DimensionError(std::string(what) + ": expected size " + std::to_string(expected) +
                         ", got " + std::to_string(actual));
  }
}

/// log(sum(exp(v))) with max subtraction; -inf entries contribute nothing.
template <class Range>
double log_sum_exp(const Range& values) {
  double peak = kNegInf;
  for (double v : values) peak = std::max(peak, v);
  if (!std::isfinite(peak)) return peak;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - peak);
  return peak + std::log(acc);
}

}  // namespace stochcal
