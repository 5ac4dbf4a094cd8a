#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cthrv {

/// Root of every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument or configuration outside its documented domain.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (CSV, timestamps, lengths).
class DataError : public Error {
 public:
  using Error::Error;
};

/// An estimator could not produce parameters from the data it was given.
class EstimationError : public Error {
 public:
  using Error::Error;
};

class TooFewSamplesError : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

/// Regressor is numerically rank deficient; parameters are unidentifiable.
class RankDeficientError : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

/// a12 of the dynamics matrix vanished, so tau cannot be recovered.
class DegenerateDynamicsError : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

/// Every particle likelihood underflowed to zero.
class WeightCollapseError : public EstimationError {
 public:
  WeightCollapseError(std::size_t step, const std::string& what)
      : EstimationError(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// A simulated gap reached s <= 0.
class TrajectoryCollapseError : public Error {
 public:
  TrajectoryCollapseError(std::size_t vehicle, std::size_t step, const std::string& what)
      : Error(what), vehicle_(vehicle), step_(step) {}
  std::size_t vehicle() const noexcept { return vehicle_; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t vehicle_;
  std::size_t step_;
};

}  // namespace cthrv
