#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace shrdlurn::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Raised when a loss or gradient stops being finite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace shrdlurn::nn

namespace shrdlurn {

// Precision of every model used for training and adaptation. Gradient
// checks instantiate the double models directly.
#if defined(SHRDLURN_REAL_DOUBLE)
using Real = double;
#else
using Real = float;
#endif

}  // namespace shrdlurn
