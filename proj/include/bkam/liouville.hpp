#pragma once
#include <functional>
#include <optional>
#include <vector>

#include "json.hpp"

namespace bk::liouville {

using Fn = std::function<double(double)>;

// Metric (f(x) - q(y))(dx^2 + dy^2) on T x [-N, N].
struct Profile {
  Fn f, df, d2f;
  Fn q, dq, d2q;
  double N = 0.0;
  // Taylor jet f = a0 + a1 (x - 1/4)^2 + a2 (x - 1/4)^4 + ...
  std::optional<double> alpha0, alpha1, alpha2;
  std::optional<double> eps;  // ellipse focal half-distance when built by ellipse_profile
};

Profile ellipse_profile(double a, double b);
// Fill the jet from f by finite differences when not supplied.
void complete_jet(Profile& p);

struct InvariantReport {
  bool parity_ok = false;
  bool positivity_ok = false;
  bool morse_ok = false;
  bool classical_iv = false;  // q'(N) < 0
  bool classical_v = false;   // f increasing on [0, 1/4]
};
InvariantReport check_invariants(const Profile& p);

struct Actions {
  double h = 0.0;
  double K = 0.0, I = 0.0;
  double dK = 0.0, dI = 0.0;
  double x_lo = 0.0, x_hi = 0.0;  // turning points
};

struct Options {
  int nodes = 64;          // Gauss-Legendre nodes per integral
  int extrap_points = 24;  // samples used to continue dI/dh to h = alpha0
  int extrap_degree = 16;
  double extrap_span = 0.25;  // fraction of alpha0
};

Actions actions(const Profile& p, double h, const Options& opt = {});
std::pair<double, double> turning_points(const Profile& p, double h);

// dI/dh and d^2I/dh^2 at h = alpha0 from the analytic continuation of dI/dh.
std::pair<double, double> dI_at_top(const Profile& p, const Options& opt = {});

// rho(h) = (dK/dh)/(dI/dh), 0 < h <= alpha0.
double rotation_function(const Profile& p, double h, const Options& opt = {});

// Rotation number per bounce (turns) on the rotational levels q(N) < h < 0:
// y-crossing time over the x-period of the separated flow.
double rotational_rotation(const Profile& p, double h, const Options& opt = {});

struct TwistReport {
  double dKdI_integral = 0, d2KdI2_integral = 0;      // closed integral formulas
  double dKdI_quadrature = 0, d2KdI2_quadrature = 0;  // K(h), I(h) pipeline
  std::optional<double> dKdI_closed, d2KdI2_closed;   // ellipse closed forms
  double max_discrepancy = 0;
  bool twisted = false;
  nlohmann::json to_json() const;
};
TwistReport twist_report(const Profile& p, const Options& opt = {});

// Closed forms for the ellipse family with parameters (eps, N).
double ellipse_dKdI(double N);
double ellipse_d2KdI2(double eps, double N);

// N values where -(2/pi) arctan(sinh 2 pi N) hits -1/4, -1/3, -1/2, -2/3, -3/4.
struct ResonantLevel {
  double rho;
  double N;
};
std::vector<ResonantLevel> resonant_levels(double Nmax = 1.0);

// Radon transform on the level q(N) < h < 0 for boundary function K(x).
double radon(const Profile& p, const Fn& K, double h, int nodes = 512);

struct MomentReport {
  std::vector<double> moments;     // raw moments
  std::vector<double> normalized;  // divided by the moments of K1 = 1
  int first_nonzero = -1;
};
// Moments int_0^{1/4} K1 (f - q(N))^{-k-1/2} dx, k = 0..count-1.
MomentReport radon_moments(const Profile& p, const Fn& K, int count, bool project_symmetric = false,
                           double tol = 1e-10);

}  // namespace bk::liouville
