#pragma once

#include <stdexcept>
#include <string>

namespace evoporo {

// Base class for all toolkit errors. Specific conditions get their own type
// so callers (and the negative-control tests) can catch them by name.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define EVOPORO_DEFINE_ERROR(Name)                                      \
    class Name : public Error {                                         \
    public:                                                             \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
    }

EVOPORO_DEFINE_ERROR(RadiusOutOfRange);
EVOPORO_DEFINE_ERROR(CellLookupFailure);
EVOPORO_DEFINE_ERROR(MeshQualityFailure);
EVOPORO_DEFINE_ERROR(NonConformingTiling);
EVOPORO_DEFINE_ERROR(NonSPDCoefficient);
EVOPORO_DEFINE_ERROR(NoConvergence);
EVOPORO_DEFINE_ERROR(InconsistentPairs);
EVOPORO_DEFINE_ERROR(MissingSurface);
EVOPORO_DEFINE_ERROR(TimeStepTooLarge);
EVOPORO_DEFINE_ERROR(RadiusBoundViolation);
EVOPORO_DEFINE_ERROR(JacobianBoundViolation);
EVOPORO_DEFINE_ERROR(TableRangeError);
EVOPORO_DEFINE_ERROR(MismatchedTimes);
EVOPORO_DEFINE_ERROR(ConfigError);

#undef EVOPORO_DEFINE_ERROR

} // namespace evoporo
