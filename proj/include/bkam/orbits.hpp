#pragma once
#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "bkam/billiard.hpp"
#include "json.hpp"

namespace bk::orbits {

struct PeriodicOrbit {
  int m = 0;
  int winding = 1;
  std::vector<double> vertices;  // arclengths in [0, L)
  std::vector<double> momenta;   // tangential momentum of the outgoing ray
  double length = 0.0;
  double residual = 0.0;       // sup norm of the length gradient
  double closure_error = 0.0;  // billiard map closure in (s, p)
  int iterations = 0;
  PhasePoint point(int j = 0) const { return {vertices[j], momenta[j]}; }
  nlohmann::json to_json() const;
};

struct FindOptions {
  int max_iter = 100;
  double tol = 1e-10;
};

// Critical point of sum |gamma(s_{j+1}) - gamma(s_j)| with s_{m+1} = s_1 + winding L.
PeriodicOrbit find_periodic(const BoundaryCurve& c, int m, int winding, const std::vector<double>& seed,
                            const FindOptions& opt = {});

enum class OrbitType { elliptic, hyperbolic, parabolic };
std::string to_string(OrbitType t);

struct OrbitReport {
  Eigen::Matrix2d monodromy = Eigen::Matrix2d::Identity();
  double trace = 2.0, det = 1.0;
  OrbitType type = OrbitType::parabolic;
  double phi = 0.0;               // eigenphase in (0, pi), elliptic only
  Eigen::Vector2cd eigenvalues;
  std::vector<int> resonances;    // orders k <= N with k phi in 2 pi Z
  int order = 0;
  nlohmann::json to_json() const;
};

OrbitReport classify_monodromy(const Eigen::Matrix2d& M, int N, double angle_tol = 1e-9);
OrbitReport classify(const BoundaryCurve& c, const PeriodicOrbit& orbit, int N);

// Area preserving germ with a fixed point at the origin.
using PlaneMap = std::function<Eigen::Vector2d(const Eigen::Vector2d&)>;

struct TwistOptions {
  int jet_order = 4;          // 3 or 4
  int fit_degree = 9;         // polynomial degree of the local fit
  int grid = 14;              // Chebyshev nodes per axis
  double jet_radius = 0.02;   // half-width of the sampling box
  bool richardson = true;     // combine radii h and h/2
  double cond_limit = 1e12;
  double resonance_tol = 1e-7;  // resonant coefficients below this are ignored
  int circles = 8;
  double circle_radius = 0.2;  // largest circle, normalized coordinates
  int circle_iterations = 2000;
  int circle_max_iterations = 64000;
  int circle_fit_degree = 3;
  int fourier_modes = 8;
};

struct CircleSample {
  double action = 0.0;    // enclosed area / 2 pi
  double rotation = 0.0;  // radians per iterate
  int iterations = 0;
};

struct BnfReport {
  double phi = 0.0;             // signed eigenphase of the normalized rotation
  double tau1_jet = 0.0;        // radians per iterate per unit action
  double tau1_circles = 0.0;
  double tau2_circles = 0.0;
  double cross_residual = 0.0;
  double cross_tolerance = 0.0;
  double area_defect = 0.0;     // Re(c / lambda), zero for area preserving maps
  double condition = 0.0;       // jet design matrix condition number
  std::vector<int> inactive_resonances;
  std::vector<CircleSample> samples;
  std::string jet_method = "chebyshev-lsq";
  std::string circle_method = "weighted-birkhoff";
  bool twisted = false;
  double tau1() const { return tau1_jet; }
  nlohmann::json to_json() const;
};

BnfReport twist_of_map(const PlaneMap& F, const TwistOptions& opt = {});
BnfReport twist_at_elliptic(const BoundaryCurve& c, const PeriodicOrbit& orbit, const TwistOptions& opt = {});

// Return map B^m written in coordinates (arc_delta(s0, s), p - p0) about the orbit's first vertex.
PlaneMap return_map(const BoundaryCurve& c, const PeriodicOrbit& orbit);

}  // namespace bk::orbits
