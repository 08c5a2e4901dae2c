#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace mecor {

// Error taxonomy used across the library. Validation errors indicate bad
// input data (CLI exit code 2); numerical errors indicate a failure of the
// fitting machinery on structurally valid input (CLI exit code 3).
enum class ErrorKind { Validation, Numerical };

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, std::string code, const std::string& message)
      : std::runtime_error(message), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& code() const noexcept { return code_; }

private:
  ErrorKind kind_;
  std::string code_;
};

#define MECOR_DEFINE_ERROR(Name, Kind)                              \
  class Name : public Error {                                       \
  public:                                                           \
    explicit Name(const std::string& message)                       \
        : Error(ErrorKind::Kind, #Name, message) {}                 \
  }

MECOR_DEFINE_ERROR(DimensionMismatch, Validation);
MECOR_DEFINE_ERROR(NonPSDCovariance, Validation);
MECOR_DEFINE_ERROR(NonFiniteValue, Validation);
MECOR_DEFINE_ERROR(EmptyDataset, Validation);
MECOR_DEFINE_ERROR(TooFewAreas, Validation);
MECOR_DEFINE_ERROR(EmptyArea, Validation);
MECOR_DEFINE_ERROR(SingletonArea, Validation);
MECOR_DEFINE_ERROR(NonPositiveMean, Validation);
MECOR_DEFINE_ERROR(InsufficientDegreesOfFreedom, Validation);
MECOR_DEFINE_ERROR(BadInputFile, Validation);

MECOR_DEFINE_ERROR(SingularMomentMatrix, Numerical);
MECOR_DEFINE_ERROR(NonPositiveTotalVariance, Numerical);
MECOR_DEFINE_ERROR(JackknifeDegenerate, Numerical);
MECOR_DEFINE_ERROR(SimulationUnstable, Numerical);

#undef MECOR_DEFINE_ERROR

}  // namespace mecor
