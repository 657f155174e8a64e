#pragma once

#include <stdexcept>
#include <string>

namespace captool {

/// Base class for all toolkit errors. `exit_code()` is what the CLI returns.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class GridMismatch : public Error {
 public:
  using Error::Error;
};

class SingularityError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_gap, int iterations)
      : Error(what), last_gap_(last_gap), iterations_(iterations) {}
  int exit_code() const noexcept override { return 3; }
  double last_gap() const noexcept { return last_gap_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double last_gap_;
  int iterations_;
};

class FeasibilityError : public Error {
 public:
  FeasibilityError(const std::string& what, double worst_violation)
      : Error(what), worst_violation_(worst_violation) {}
  double worst_violation() const noexcept { return worst_violation_; }

 private:
  double worst_violation_;
};

class WitnessQualityError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

class SkipBudgetError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 5; }
};

}  // namespace captool
