#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ladderlab {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A non-finite value appeared while evaluating an observable or a partial derivative.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// A point lies outside the domain of a potential branch.
class DomainError : public Error {
 public:
  using Error::Error;
};

class DegenerateDegreeError : public Error {
 public:
  using Error::Error;
};

/// Branch tracking failed even after grid refinement.
class ContinuationError : public Error {
 public:
  ContinuationError(const std::string& what, double last_good_x)
      : Error(what + " (last good x = " + std::to_string(last_good_x) + ")"), last_good_x_(last_good_x) {}
  double last_good_x() const noexcept { return last_good_x_; }

 private:
  double last_good_x_;
};

/// A potential branch does not solve the algebraic system it was paired with.
class InconsistentInputError : public Error {
 public:
  using Error::Error;
};

class SignResolutionError : public Error {
 public:
  SignResolutionError(const std::string& what, double residual_plus, double residual_minus)
      : Error(what), residual_plus_(residual_plus), residual_minus_(residual_minus) {}
  double residual_plus() const noexcept { return residual_plus_; }
  double residual_minus() const noexcept { return residual_minus_; }

 private:
  double residual_plus_;
  double residual_minus_;
};

/// {H, A} is not proportional to A with a unit-modulus imaginary factor.
class NotALadderError : public Error {
 public:
  NotALadderError(const std::string& what, std::vector<double> profile)
      : Error(what), profile_(std::move(profile)) {}
  const std::vector<double>& deviation_profile() const noexcept { return profile_; }

 private:
  std::vector<double> profile_;
};

class ResonanceError : public Error {
 public:
  ResonanceError(const std::string& what, double mismatch) : Error(what), mismatch_(mismatch) {}
  double mismatch() const noexcept { return mismatch_; }

 private:
  double mismatch_;
};

class AlgebraMismatchError : public Error {
 public:
  AlgebraMismatchError(const std::string& what, std::vector<double> profile)
      : Error(what), profile_(std::move(profile)) {}
  const std::vector<double>& residual_profile() const noexcept { return profile_; }

 private:
  std::vector<double> profile_;
};

/// The trajectory left the domain of a potential branch.
class DomainExitError : public Error {
 public:
  DomainExitError(const std::string& what, double exit_time) : Error(what), exit_time_(exit_time) {}
  double exit_time() const noexcept { return exit_time_; }

 private:
  double exit_time_;
};

/// Step size underflow in the adaptive integrator.
class StiffnessError : public Error {
 public:
  StiffnessError(const std::string& what, double time) : Error(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

class AlgebraicTrajectoryError : public Error {
 public:
  AlgebraicTrajectoryError(const std::string& what, double time, double residual)
      : Error(what), time_(time), residual_(residual) {}
  double time() const noexcept { return time_; }
  double residual() const noexcept { return residual_; }

 private:
  double time_;
  double residual_;
};

/// Invalid command-line or configuration input. Carries the offending key.
class UsageError : public Error {
 public:
  UsageError(const std::string& key, const std::string& what)
      : Error("invalid value for '" + key + "': " + what), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace ladderlab
