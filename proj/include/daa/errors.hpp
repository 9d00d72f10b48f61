#pragma once

#include <stdexcept>
#include <string>

namespace daa {

// Error taxonomy shared across modules. The CLI maps these onto exit codes.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file (bad date, bad header, duplicate dates).
class FormatError : public Error {
public:
  using Error::Error;
};

// Not enough rows/observations for the requested operation.
class InsufficientDataError : public Error {
public:
  using Error::Error;
};

// Dimension mismatch between a model and the data it is applied to.
class ShapeError : public Error {
public:
  using Error::Error;
};

// Invalid argument or hyperparameter (non-stochastic matrix, bad cap, ...).
class ParameterError : public Error {
public:
  using Error::Error;
};

// Optimization or estimation failed to produce finite results.
class NumericalError : public Error {
public:
  using Error::Error;
};

// A multi-stage pipeline cannot continue (e.g. empty feature selection).
class PipelineError : public Error {
public:
  using Error::Error;
};

// Filesystem / IO failure.
class IoError : public Error {
public:
  using Error::Error;
};

}  // namespace daa
