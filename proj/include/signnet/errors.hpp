#pragma once

#include <stdexcept>
#include <string>

namespace signnet {

/// Malformed input: bad dataset files, out-of-range config values, bad CLI
/// arguments. The CLI maps this to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical failure during a run (divergence, non-convergence).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace signnet
