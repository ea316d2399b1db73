#pragma once

#include <stdexcept>
#include <string>

namespace slowfast {

// Named error types, one per failure mode of the public operations.
// All derive from std::runtime_error so callers can catch coarsely.

#define SLOWFAST_DEFINE_ERROR(Name)                          \
  struct Name : std::runtime_error {                         \
    explicit Name(const std::string& what)                   \
        : std::runtime_error(std::string(#Name ": ") + what) {} \
  }

SLOWFAST_DEFINE_ERROR(FastNotDissipative);
SLOWFAST_DEFINE_ERROR(DegenerateInterval);
SLOWFAST_DEFINE_ERROR(EmptyDomain);
SLOWFAST_DEFINE_ERROR(NonGridShift);
SLOWFAST_DEFINE_ERROR(CovarianceNotPSD);
SLOWFAST_DEFINE_ERROR(LyapunovSolveFailed);
SLOWFAST_DEFINE_ERROR(BlowUp);
SLOWFAST_DEFINE_ERROR(NoContraction);
SLOWFAST_DEFINE_ERROR(TruncationTooShort);
SLOWFAST_DEFINE_ERROR(MixingTooSlow);
SLOWFAST_DEFINE_ERROR(NoPlateau);
SLOWFAST_DEFINE_ERROR(NegativeDiagonal);
SLOWFAST_DEFINE_ERROR(NotNearlyPSD);
SLOWFAST_DEFINE_ERROR(CacheResolutionTooCoarse);
SLOWFAST_DEFINE_ERROR(TableRangeExceeded);
SLOWFAST_DEFINE_ERROR(ConfigParse);
SLOWFAST_DEFINE_ERROR(DegenerateFit);
SLOWFAST_DEFINE_ERROR(InvalidArgument);

#undef SLOWFAST_DEFINE_ERROR

}  // namespace slowfast
