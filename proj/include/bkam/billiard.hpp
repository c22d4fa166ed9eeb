#pragma once
#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

#include "bkam/geometry.hpp"

namespace bk {

// Boundary phase point: arclength s and tangential momentum p = <v, tangent>.
struct PhasePoint {
  double s = 0.0;
  double p = 0.0;
};

struct OrbitSegment {
  std::vector<PhasePoint> points;
  std::vector<double> chords;
  double length = 0.0;
};

struct StepOptions {
  double glancing_sin = 1e-9;
};

// Full step data; theta is the normal angle of the impact point.
struct StepResult {
  PhasePoint next;
  double theta_next = 0.0;
  double chord = 0.0;
};

StepResult step_full(const BoundaryCurve& c, const PhasePoint& rho, double theta_hint = NAN,
                     const StepOptions& opt = {});
PhasePoint step(const BoundaryCurve& c, const PhasePoint& rho, const StepOptions& opt = {});
OrbitSegment iterate(const BoundaryCurve& c, const PhasePoint& rho, int n, const StepOptions& opt = {});

// Analytic dB in (s, p) coordinates.
Eigen::Matrix2d jacobian(const BoundaryCurve& c, const PhasePoint& rho, const StepOptions& opt = {});
// Central finite differences of step.
Eigen::Matrix2d jacobian_fd(const BoundaryCurve& c, const PhasePoint& rho, double h = 1e-6,
                            const StepOptions& opt = {});

// G(s, s') = -|gamma(s) - gamma(s')|.
double generating_value(const BoundaryCurve& c, double s, double s2);

// Signed shortest displacement from s to s2 on the circle of length L, in [-L/2, L/2).
double arc_delta(double s, double s2, double L);

void write_csv(std::ostream& os, const OrbitSegment& seg);

}  // namespace bk
