#pragma once

#include <stdexcept>
#include <string>

namespace vern {

// Base for every error raised by the library. Subclasses let callers (the CLI
// in particular) map failures onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define VERN_DEFINE_ERROR(Name)            \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

VERN_DEFINE_ERROR(ShapeError);
VERN_DEFINE_ERROR(NumericError);
VERN_DEFINE_ERROR(ParameterError);
VERN_DEFINE_ERROR(UsageError);
VERN_DEFINE_ERROR(IoError);
VERN_DEFINE_ERROR(ValidationError);
VERN_DEFINE_ERROR(FormatError);
VERN_DEFINE_ERROR(DataError);
VERN_DEFINE_ERROR(StratificationError);
VERN_DEFINE_ERROR(CheckpointError);
VERN_DEFINE_ERROR(MetricError);
VERN_DEFINE_ERROR(TrainingError);

#undef VERN_DEFINE_ERROR

}  // namespace vern
