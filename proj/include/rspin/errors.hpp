#pragma once

#include <stdexcept>
#include <string>

namespace rspin {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define RSPIN_DEFINE_ERROR(Name)                                        \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
  }

// scalar
RSPIN_DEFINE_ERROR(MixedR);
RSPIN_DEFINE_ERROR(NotMonomialUnit);
RSPIN_DEFINE_ERROR(NotRational);
RSPIN_DEFINE_ERROR(EpsWindowViolation);

// series
RSPIN_DEFINE_ERROR(SpaceMismatch);
RSPIN_DEFINE_ERROR(BadVar);
RSPIN_DEFINE_ERROR(OutOfCap);
RSPIN_DEFINE_ERROR(NonLinearSubstitution);
RSPIN_DEFINE_ERROR(CapExceeded);

// zsymbol / pdo
RSPIN_DEFINE_ERROR(BelowValidRange);
RSPIN_DEFINE_ERROR(NotMonic);
RSPIN_DEFINE_ERROR(DepthUnreachable);

// hierarchy
RSPIN_DEFINE_ERROR(InternalInconsistency);
RSPIN_DEFINE_ERROR(StringCheckFailed);
RSPIN_DEFINE_ERROR(GenusLeak);
RSPIN_DEFINE_ERROR(BadIndex);
RSPIN_DEFINE_ERROR(Inconsistent);

// correlators
RSPIN_DEFINE_ERROR(UnmappedVariable);
RSPIN_DEFINE_ERROR(TwoMinusOneInsertions);
RSPIN_DEFINE_ERROR(BadKey);

#undef RSPIN_DEFINE_ERROR

}  // namespace rspin
