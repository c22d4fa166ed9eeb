#pragma once
#include <stdexcept>
#include <string>

namespace bk {

// Base for every error raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define BK_ERROR(Name)                                   \
  struct Name : Error {                                  \
    explicit Name(const std::string& m) : Error(#Name ": " + m) {} \
  }

BK_ERROR(InvalidArgument);
BK_ERROR(ConvexityViolation);
BK_ERROR(GlancingRay);
BK_ERROR(NoIntersection);
BK_ERROR(CoincidentPoints);
BK_ERROR(NoConvergence);
BK_ERROR(DegenerateHessian);
BK_ERROR(ResonantOrbit);
BK_ERROR(JetIllConditioned);
BK_ERROR(SmallDivisorBlowup);
BK_ERROR(PreconditionViolation);
BK_ERROR(SpacingTooCoarse);
BK_ERROR(LevelOutOfRange);
BK_ERROR(TurningPointFailure);
BK_ERROR(JetMissing);
BK_ERROR(SymmetryViolation);
BK_ERROR(InsufficientBoundaryApproach);
BK_ERROR(SmallnessViolation);
BK_ERROR(FlowStepFailure);
BK_ERROR(ParameterOutOfRange);
BK_ERROR(PeriodicLine);
BK_ERROR(DegenerateDeterminant);
BK_ERROR(ConfigError);

#undef BK_ERROR

}  // namespace bk
