#pragma once

#include <stdexcept>
#include <string>

namespace jmsurv {

/// Bad user input: malformed files, invalid configuration, unknown names.
/// The CLI maps this to exit status 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical or convergence failure (non-finite posterior, optimiser
/// divergence, too few draws to summarise). The CLI maps this to exit status 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace jmsurv
