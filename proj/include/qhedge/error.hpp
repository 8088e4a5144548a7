#pragma once

#include <stdexcept>
#include <string>

namespace qhedge {

/// Root of every numerical or model-level failure raised by the library.
/// The CLI maps these to exit code 2; I/O and usage problems use
/// std::runtime_error / InputError and map to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or missing input data (files, columns, dates).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define QHEDGE_DEFINE_ERROR(Name)            \
  class Name : public Error {                \
   public:                                   \
    using Error::Error;                      \
  };

QHEDGE_DEFINE_ERROR(DomainError)
QHEDGE_DEFINE_ERROR(ParamError)
QHEDGE_DEFINE_ERROR(NonFiniteError)
QHEDGE_DEFINE_ERROR(NonStationaryError)
QHEDGE_DEFINE_ERROR(NoRootError)
QHEDGE_DEFINE_ERROR(DegenerateBlockError)
QHEDGE_DEFINE_ERROR(DegenerateVarianceError)
QHEDGE_DEFINE_ERROR(FrequencyError)
QHEDGE_DEFINE_ERROR(InvalidMeasureError)
QHEDGE_DEFINE_ERROR(InadmissibleHError)
QHEDGE_DEFINE_ERROR(NonConvergenceError)
QHEDGE_DEFINE_ERROR(InsufficientDataError)
QHEDGE_DEFINE_ERROR(InversionError)
QHEDGE_DEFINE_ERROR(MissingQuoteError)

#undef QHEDGE_DEFINE_ERROR

}  // namespace qhedge
