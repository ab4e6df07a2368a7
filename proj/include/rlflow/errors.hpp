#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace rlflow {

/// Invalid argument to a numerical routine (window outside grid, eps <= 0, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Bad run configuration: unknown catalogue name, invalid parameter range.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical breakdown during a computation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// ODE integration failed (step underflow or non-finite state).
class IntegrationFailure : public NumericalError {
 public:
  IntegrationFailure(const std::string& what, double time, std::vector<double> state)
      : NumericalError(what), time_(time), state_(std::move(state)) {}
  double time() const noexcept { return time_; }
  const std::vector<double>& state() const noexcept { return state_; }

 private:
  double time_;
  std::vector<double> state_;
};

/// Picard iteration did not reach the requested tolerance.
class ConvergenceFailure : public NumericalError {
 public:
  ConvergenceFailure(const std::string& what, std::vector<double> ratios)
      : NumericalError(what), ratios_(std::move(ratios)) {}
  const std::vector<double>& ratios() const noexcept { return ratios_; }

 private:
  std::vector<double> ratios_;
};

}  // namespace rlflow
