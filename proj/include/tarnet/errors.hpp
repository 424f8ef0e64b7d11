#ifndef TARNET_ERRORS_HPP
#define TARNET_ERRORS_HPP

#include <stdexcept>

namespace tarnet {

// Precondition and shape violations are reported as std::invalid_argument.

/// Malformed or incompatible input data (CSV contents, model/data mismatch).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Divergence, non-finite losses, non-stationary dynamics.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tarnet

#endif  // TARNET_ERRORS_HPP
