#pragma once

#include <stdexcept>
#include <string>

namespace tdr {

// Invalid user input or violated precondition. Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// Base for failures of the numerics themselves. Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ConditioningFailure : public NumericalError {
  public:
    ConditioningFailure(const std::string& what, int largest_ok)
        : NumericalError(what), largest_achievable(largest_ok) {}
    int largest_achievable;
};

class SolveFailure : public NumericalError {
  public:
    using NumericalError::NumericalError;
};

class FactorizationFailure : public NumericalError {
  public:
    FactorizationFailure(const std::string& what, double cond_estimate)
        : NumericalError(what), condition_estimate(cond_estimate) {}
    double condition_estimate;
};

class NonConvergence : public NumericalError {
  public:
    NonConvergence(const std::string& what, double last_ratio)
        : NumericalError(what), ratio(last_ratio) {}
    double ratio;
};

class NonFiniteNonlinearity : public NumericalError {
  public:
    using NumericalError::NumericalError;
};

class DomainViolation : public ConfigError {
  public:
    using ConfigError::ConfigError;
};

class GridMismatch : public ConfigError {
  public:
    using ConfigError::ConfigError;
};

class NoAdmissibleN : public NumericalError {
  public:
    NoAdmissibleN(const std::string& what, int best, double best_err)
        : NumericalError(what), best_n(best), best_error(best_err) {}
    int best_n;
    double best_error;
};

} // namespace tdr
