#pragma once

#include <stdexcept>
#include <string>

namespace twofield {

// Every failure the library reports derives from Error. The three direct
// subclasses map onto the CLI exit codes: ConfigError -> 2,
// NumericalError -> 3, InfeasibleError -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid input or violated precondition.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Divergence, solver failure or a failed internal cross-check.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// The inputs are valid but the requested estimate cannot be produced.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

class StructuralError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class InfiniteAffinityError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class GeometryError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class RangeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class ContractError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class InternalConsistencyError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DivergenceError : public NumericalError {
 public:
  DivergenceError(long long step, int chain, const std::string& what)
      : NumericalError(what), step_(step), chain_(chain) {}
  long long step() const { return step_; }
  int chain() const { return chain_; }

 private:
  long long step_;
  int chain_;
};

class CollinearRegressorsError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DegenerateDriftError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class InsufficientDataError : public InfeasibleError {
 public:
  using InfeasibleError::InfeasibleError;
};

class DegenerateInstanceError : public InfeasibleError {
 public:
  using InfeasibleError::InfeasibleError;
};

}  // namespace twofield
