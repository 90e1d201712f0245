#pragma once

#include <stdexcept>
#include <string>

namespace hemopinn {

// Base class for all domain errors raised by the library. The CLI maps
// ConfigError to exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

#define HEMOPINN_DEFINE_ERROR(name)                                  \
    class name : public Error {                                      \
    public:                                                          \
        explicit name(const std::string& msg) : Error(msg) {}        \
    }

// geometry
HEMOPINN_DEFINE_ERROR(NonConformingGrid);
HEMOPINN_DEFINE_ERROR(EmptyDomain);
HEMOPINN_DEFINE_ERROR(UnknownSegment);
HEMOPINN_DEFINE_ERROR(InvalidDomain);

// windkessel
HEMOPINN_DEFINE_ERROR(WindowTooShort);
HEMOPINN_DEFINE_ERROR(NonPositivePressure);
HEMOPINN_DEFINE_ERROR(NonPositiveDecay);

// refsolver
HEMOPINN_DEFINE_ERROR(PoissonDiverged);
HEMOPINN_DEFINE_ERROR(CFLViolation);
HEMOPINN_DEFINE_ERROR(NotConverged);

// measure
HEMOPINN_DEFINE_ERROR(PointOutsideDomain);
HEMOPINN_DEFINE_ERROR(ZeroReference);
HEMOPINN_DEFINE_ERROR(DegenerateField);

// neural / pinn
HEMOPINN_DEFINE_ERROR(NonFiniteLoss);
HEMOPINN_DEFINE_ERROR(DegreeTooLow);
HEMOPINN_DEFINE_ERROR(TooFewTimes);

// pipeline
HEMOPINN_DEFINE_ERROR(MissingSnapshots);
HEMOPINN_DEFINE_ERROR(MissingEstimates);
HEMOPINN_DEFINE_ERROR(MissingHistory);
HEMOPINN_DEFINE_ERROR(ChecksumMismatch);

#undef HEMOPINN_DEFINE_ERROR

// Pressure unit conversion used at I/O boundaries only; the core works in
// dyn/cm^2 exclusively.
inline constexpr double kDynPerMmHg = 1333.22;

inline double mmhg_to_dyn(double mmhg) { return mmhg * kDynPerMmHg; }
inline double dyn_to_mmhg(double dyn) { return dyn / kDynPerMmHg; }

} // namespace hemopinn
