#pragma once

#include <stdexcept>
#include <string>

namespace liehmp {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define LIEHMP_DEFINE_ERROR(Name)          \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

// lie-core
LIEHMP_DEFINE_ERROR(NotInAlgebra);
LIEHMP_DEFINE_ERROR(NearCutLocus);
LIEHMP_DEFINE_ERROR(InvalidGroupSpec);
LIEHMP_DEFINE_ERROR(OffGroup);

// dynamics
LIEHMP_DEFINE_ERROR(InvalidPhase);
LIEHMP_DEFINE_ERROR(StepTooLarge);
LIEHMP_DEFINE_ERROR(NonTransversal);
LIEHMP_DEFINE_ERROR(DegenerateNormal);
LIEHMP_DEFINE_ERROR(ResultOffGroup);

// phase-solver
LIEHMP_DEFINE_ERROR(MissingMinimizer);
LIEHMP_DEFINE_ERROR(SingularJacobian);
LIEHMP_DEFINE_ERROR(NoConvergedStart);

// hmp
LIEHMP_DEFINE_ERROR(DimensionMismatch);
LIEHMP_DEFINE_ERROR(NoRoot);
LIEHMP_DEFINE_ERROR(GradientCalibrationFailed);

// eg-hmp
LIEHMP_DEFINE_ERROR(LineSearchFailed);

// cli
LIEHMP_DEFINE_ERROR(ConfigError);

#undef LIEHMP_DEFINE_ERROR

}  // namespace liehmp
