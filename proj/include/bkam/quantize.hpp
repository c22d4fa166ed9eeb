#pragma once
#include <iosfwd>
#include <vector>

#include "bkam/circles.hpp"
#include "bkam/geometry.hpp"
#include "json.hpp"

namespace bk::quantize {

// Maslov data. The defaults are placeholders, not derived from any table.
struct Maslov {
  int theta0 = 1;
  int theta = 3;
  // false: 2 pi (k_n + theta/4); true: 2 pi k_n - pi theta/2
  bool alt_sign = false;
};

double first_target(int k, const Maslov& m);    // k + theta0/4
double second_target(int kn, const Maslov& m);  // 2 pi (k_n + theta/4) or 2 pi k_n - pi theta/2

// Action data of one torus family near omega0, described by beta(omega0 + t) = sum beta[m] t^m.
// I(omega) = beta'(omega) and L(I) = omega I - beta(omega), so dL/dI = omega holds exactly.
struct ActionModel {
  double omega0 = 0.0;
  std::vector<double> beta;
  double fit_rms = 0.0;  // residual of the fit that produced beta, 0 for given series

  double beta_at(double omega) const;
  double I_at(double omega) const;
  double dI_at(double omega) const;
  double omega_of(double I) const;  // Newton on I(omega) = I started at omega0
  double L(double I) const;

  double I0() const { return beta.size() > 1 ? beta[1] : 0.0; }
  double L0() const { return omega0 * I0() - beta.at(0); }
  double D() const { return -beta.at(0); }  // L - omega I = -beta
  // L(I0 + x) = sum c[m] x^m, m = 0..order
  std::vector<double> L_taylor(int order) const;
  nlohmann::json to_json() const;
};

ActionModel model_from_series(double omega0, std::vector<double> beta);

struct ModelOptions {
  double half_width = 0.03;  // omega window
  int count = 11;            // circles in the window, omega0 included when odd
  int degree = 8;
  circles::CircleOptions circle;
};

// Hermite least squares of beta on (beta_i, I_i) from invariant circles of the curve.
ActionModel model_from_circles(const BoundaryCurve& c, double omega0, const ModelOptions& opt = {});

struct Hit {
  long k = 0, kn = 0;
  double mu0 = 0.0;
  double distance = 0.0;  // |(mu0 I - k - theta0/4, (mu0 L - target)/2 pi)|
};

struct SearchOptions {
  Maslov maslov;
  bool check_periodic = true;
  int periodic_order = 24;  // max |k| + |k_n| in the non-periodicity proxy
  double periodic_tol = 1e-12;
};

// All (q, mu0) with mu0 in [1, lambda_max] and distance < tol, sorted by mu0.
std::vector<Hit> strong_search(double I, double L, double lambda_max, double tol, const SearchOptions& opt = {});

// Nearest integer pair to the torus at lambda, refined to the best mu0.
Hit nearest_seed(double I, double L, double lambda, const Maslov& m);

// Signed distance to the quantization line, with the sign of k + theta0/4 - mu0 I.
double signed_offset(const Hit& h, double I, const Maslov& m);

// Lattice point with mu0 in [lambda, lambda (1 + window)] whose signed offset is closest to offset.
// Seeds with matched offsets share the leading constant of the recursion residual across scales.
Hit matched_seed(double I, double L, double lambda, double offset, const Maslov& m, double window = 0.25);

struct QuasiOptions {
  Maslov maslov;
  int M = 2;
  double seed_bound = 10.0;  // max |(W_0, V_0)| accepted for the seed
  double c0 = 10.0;          // c0^-1 |q| <= mu0 <= c0 |q|
};

struct QuantizationRecord {
  long k = 0, kn = 0;
  double mu0 = 0.0, eps = 0.0, mu = 0.0;
  Maslov maslov;
  int M = 0;
  double I = 0.0, L = 0.0, omega = 0.0, D = 0.0;
  std::vector<double> c, b;   // c_0..c_M, b_0..b_{M+1}
  std::vector<double> W, V;   // right-hand sides, W has M + 2 entries
  bool bound_ok = false;
  double first_residual = 0.0, second_residual = 0.0;
  nlohmann::json to_json() const;
};

QuantizationRecord quasi_eigen(const Hit& seed, const ActionModel& model, const QuasiOptions& opt = {});

struct Residuals {
  double first = 0.0;   // |mu zeta - k - theta0/4| / max(1, |k + theta0/4|), zeta = (k + theta0/4)/mu
  double second = 0.0;  // |mu L(zeta) - target|
  double series = 0.0;  // |zeta - (I + sum b_j eps^(j+1))|
};

Residuals residual_check(const QuantizationRecord& r, const ActionModel& model);

void write_hits_csv(std::ostream& os, const std::vector<Hit>& hits);
void write_records_csv(std::ostream& os, const std::vector<QuantizationRecord>& recs);

}  // namespace bk::quantize
