#pragma once
#include <vector>

#include "bkam/circles.hpp"
#include "bkam/geometry.hpp"
#include "json.hpp"

namespace bk::melrose {

struct CurvatureInvariants {
  double dR0 = 0.0;   // R'(0)
  double d2R0 = 0.0;  // R''(0)
  int nodes = 0;      // trapezoid nodes in theta at convergence
};

// R'(0) = -(1/pi) int kappa^(2/3) ds, R''(0) = (1/2160 pi) int (9 kappa^(4/3) + 8 kappa^(-8/3) kappa'^2) ds.
CurvatureInvariants invariants_from_curvature(const BoundaryCurve& c);

struct FitOptions {
  int degree = 3;            // polynomial degree in omega^2
  double max_omega = 0.2;    // boundary regime threshold
  int min_records = 4;
};

struct InterpolatingFit {
  double l = 0.0;      // limit of the caustic parameter r = -I as omega -> 0
  double dR0 = 0.0;
  double d2R0 = 0.0;
  double sigma_l = 0.0, sigma_dR0 = 0.0, sigma_d2R0 = 0.0;
  std::vector<double> coef;  // r = sum coef[j] omega^(2j)
  double rms = 0.0;
  double max_omega = 0.0;
  nlohmann::json to_json() const;
};

InterpolatingFit interpolating_fit(const BoundaryCurve& c, const std::vector<circles::InvariantCircleRecord>& records,
                                   const FitOptions& opt = {});

struct MelroseReport {
  double length = 0.0;
  CurvatureInvariants curvature;
  InterpolatingFit fit;
  double residual_l = 0.0;     // |fit l - length / 2 pi|
  double residual_dR0 = 0.0;   // |fitted R'(0) - curvature R'(0)|
  double residual_d2R0 = 0.0;
  double ratio_d2R0 = 0.0;     // fitted / curvature
  std::vector<circles::InvariantCircleRecord> records;
  nlohmann::json to_json() const;
};

std::vector<double> default_omegas();

// Finds the circles at the given frequencies (largest first, by continuation) and compares both routes.
MelroseReport compare(const BoundaryCurve& c, std::vector<double> omegas, const FitOptions& opt = {},
                      const circles::CircleOptions& copt = {});

}  // namespace bk::melrose
