#pragma once
#include <complex>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "bkam/billiard.hpp"
#include "json.hpp"

namespace bk::circles {

struct DiophantineSpec {
  double kappa = 1e-3;
  double tau = 1.5;
  int kmax = 1000;
  void validate() const;
};

struct DiophantineVerdict {
  bool accepted = true;
  int worst_k = 0;
  double worst_margin = 0.0;  // dist(k omega, 2 pi Z) - kappa / k^tau
  int first_violation = 0;    // 0 when accepted
};

DiophantineVerdict is_diophantine(double omega, const DiophantineSpec& spec);

// Monte Carlo fraction of omega in [lo, hi] failing the condition.
double measure_omega_kappa(double lo, double hi, const DiophantineSpec& spec, int samples, std::uint64_t seed);

enum class Scheme { plain, weighted };

struct RotationEstimate {
  double omega = 0.0;  // radians per map application
  double error = 0.0;  // difference to the estimate from the first half of the orbit
};

RotationEstimate rotation_number(const BoundaryCurve& c, const PhasePoint& start, int iterations,
                                 Scheme scheme = Scheme::weighted);

// Weighted Birkhoff average of -chord along the orbit.
double birkhoff_beta(const BoundaryCurve& c, const PhasePoint& start, int iterations);

struct InvariantCircleRecord {
  double omega = 0.0;
  double perimeter = 0.0;
  int modes = 0;
  // f(theta) = (theta L / 2 pi + u(theta), v(theta)), u = sum u_k e^{ik theta}, k = 0..modes
  std::vector<std::complex<double>> u, v;
  double residual = 0.0;  // sup over test angles off the solve grid
  double beta = 0.0;
  double action = 0.0;    // I(omega) = -(1/2 pi) oint p ds
  int iterations = 0;
  std::vector<double> history;

  PhasePoint at(double theta) const;
  nlohmann::json to_json() const;
  static InvariantCircleRecord from_json(const nlohmann::json& j);
};

struct CircleSeed {
  double s0 = 0.0;
  std::optional<double> p0;                    // skip the bisection when set
  std::optional<InvariantCircleRecord> from;   // continuation from a nearby circle
  double p_lo = -1 + 1e-6, p_hi = 1 - 1e-6;   // bisection bracket, omega decreasing in p
};

struct CircleOptions {
  int modes = 64;
  int max_iter = 30;
  double tol = 1e-9;
  int test_angles = 2048;
  int seed_iterations = 2000;
  DiophantineSpec spec{1e-3, 1.5, 64};
};

InvariantCircleRecord find_circle(const BoundaryCurve& c, double omega, const CircleSeed& seed = {},
                                  const CircleOptions& opt = {});

// Conjugacy residual of a record on n equispaced angles offset from the solve grid.
double conjugacy_residual(const BoundaryCurve& c, const InvariantCircleRecord& r, int n = 2048);

struct IdentityReport {
  double omega = 0.0;
  double h = 0.0;
  double dbeta_domega = 0.0;
  double action = 0.0;
  double residual = 0.0;   // |d beta/d omega - I|
  double dL_dI = 0.0;      // L(I) = omega I - beta
  double legendre_residual = 0.0;
  nlohmann::json to_json() const;
};

IdentityReport bnf_identity_residual(std::vector<InvariantCircleRecord> records);

void write_table_csv(std::ostream& os, const std::vector<InvariantCircleRecord>& records);

}  // namespace bk::circles
