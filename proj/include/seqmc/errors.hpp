#pragma once

#include <stdexcept>

namespace seqmc {

/// Invalid configuration: bad parameters, incompatible kernel/flow pairs.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The model violated one of its own contracts (e.g. a vanishing potential).
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by the exact finite-state analysis (non-ergodic kernels, degenerate
/// test functions).
class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Enumeration would exceed the configured path-count cap.
class SizeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace seqmc
