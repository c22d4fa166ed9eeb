#pragma once
#include <array>
#include <complex>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <boost/multiprecision/float128.hpp>

#include "json.hpp"

namespace bk::kam {

using qreal = boost::multiprecision::float128;
using qcomplex = std::complex<qreal>;
using QVec = std::array<qreal, 2>;  // only the first n entries are used
using Multi = std::array<int, 2>;

qreal quad_pi();

// ---------------------------------------------------------------------------
// Small divisors and the homological equation for the rotation theta -> theta + omega.

// Smooth step: 1 on |x| <= a, 0 on |x| >= b, built from the exp(-1/(1 - x^2)) bump.
double smooth_cutoff(double x, double a, double b);

struct DivisorSpec {
  double kappa = 0.1;
  double tau = 1.2;
};

// z_k(omega) = 1 - e^{i<omega,k>} + (kappa/3)(1+|k|)^-tau phi_k(<omega,k>), |k| the l1 norm.
std::complex<double> modified_divisor(const std::vector<double>& omega, const std::vector<int>& k,
                                      const DivisorSpec& spec);
double regularization(const std::vector<double>& omega, const std::vector<int>& k, const DivisorSpec& spec);

struct FourierMode {
  std::vector<int> k;
  std::complex<double> c;
};

struct HomologicalSolution {
  std::vector<FourierMode> f;         // f_k = -F_k / z_k, zero mean
  std::complex<double> c = 0.0;       // -F_0
  std::vector<double> residual;       // |f_k (e^{i<omega,k>} - 1) - F_k| per input mode (c for k = 0)
  double max_residual = 0.0;
  double max_amplification = 0.0;    // max |1/z_k|
};

// Solves f(theta + omega) - f(theta) - c = F(theta) mode by mode.
HomologicalSolution solve_homological(const std::vector<FourierMode>& F, const std::vector<double>& omega,
                                      const DivisorSpec& spec);

// ---------------------------------------------------------------------------
// Analytic smoothing on periodic grids.

struct SmoothingKernel {
  double plateau = 0.5;  // mhat = 1 on |xi| <= plateau
  double support = 1.0;  // mhat = 0 on |xi| >= support
  double operator()(double xi) const { return smooth_cutoff(xi, plateau, support); }
};

struct SmoothingReport {
  std::vector<double> samples;
  double tail_max = 0.0;     // largest |coefficient| with |k| >= support / rho (exactly zero)
  int last_mode = 0;         // highest mode with nonzero multiplier
};

SmoothingReport smooth(const std::vector<double>& samples, double rho, const SmoothingKernel& kernel = {});

struct SmoothingRate {
  int ell = 0;
  std::vector<double> rho, error;  // sup |S_rho f - f| on the grid
  double slope = 0.0;              // fit of log error against log rho
  nlohmann::json to_json() const;
};

// Synthetic f = sum_k k^-(ell+1) cos k theta over 2^log2_modes modes, rho = 2^-e for e in [e_lo, e_hi].
SmoothingRate smoothing_rate(int ell, int e_lo = 3, int e_hi = 9, int log2_modes = 16);

// ---------------------------------------------------------------------------
// Hamiltonians H = e + <omega, I> + P(theta, I) on T^n x R^n, n = 1 or 2.

class Perturbation {
 public:
  virtual ~Perturbation() = default;
  virtual qreal value(const QVec& th, const QVec& I) const = 0;
  virtual int depth() const { return 0; }
};
using PerturbationPtr = std::shared_ptr<const Perturbation>;

// amp (1 + <slope, I>) cos(<k, theta> + phase)
struct TrigTerm {
  Multi k{0, 0};
  double amp = 0.0;
  double phase = 0.0;
  std::array<double, 2> slope{0.0, 0.0};
};
PerturbationPtr trig_perturbation(std::vector<TrigTerm> terms);
PerturbationPtr function_perturbation(std::function<qreal(const QVec&, const QVec&)> f);

// Trigonometric polynomial affine in I: sum_k (a_k + <b_k, I>) e^{i<k, theta>}, Hermitian.
struct AffineTrig {
  int n = 1;
  struct Mode {
    Multi k{0, 0};
    qcomplex a;
    std::array<qcomplex, 2> b;
  };
  std::vector<Mode> modes;  // both k and -k present; evaluation reads only the half with k > 0

  qreal value(const QVec& th, const QVec& I) const;
  // value, d/dtheta, d/dI at one point
  void eval(const QVec& th, const QVec& I, qreal& v, QVec& dth, QVec& dI) const;
  const Mode* find(const Multi& k) const;
  int degree() const;
};

struct Hamiltonian {
  int n = 1;
  std::vector<qreal> omega;
  qreal energy = 0;
  PerturbationPtr P;
  int grid = 64;       // FFT points per torus dimension
  double s = 0.5;      // strip width for the norm proxy
  double r = 0.5;      // action radius for the norm proxy

  // Memoized grid samples of P(theta, 0) and grad_I P(theta, 0), keyed on (P, grid).
  struct Samples {
    std::vector<qreal> value;
    std::array<std::vector<qreal>, 2> grad;
  };
  const Samples& samples() const;
  void validate() const;

 private:
  mutable std::shared_ptr<Samples> cache_;
  mutable const Perturbation* cache_P_ = nullptr;
  mutable int cache_grid_ = 0;
};

// Sum_k |f_k| e^{|k| s} of the theta-Fourier data of f(., I), maximized over I in {0, +-r e_i}.
double strip_norm_proxy(const Hamiltonian& H, double s, double r);
// Same for one-dimensional real grid data.
double strip_norm_proxy(const std::vector<double>& samples, double s);

struct StepParams {
  double sigma = 0.08;
  double eta = 0.12;
  int K = 16;
  double h = 1e-3;
  double kappa = 0.1;
  double tau = 1.2;
  double c0 = 1.0;
  bool enforce_smallness = true;
  double flow_tol = 1e-16;  // relative change of the time-one map under step halving
  int gl_nodes = 10;
};

struct Smallness {
  double a = 0, b = 0, c = 0, d = 0;  // margins, >= 0 when the inequality holds
  bool ok() const { return a >= 0 && b >= 0 && c >= 0; }
  std::string failed() const;
};

// omega-parameterized perturbation for the frequency correction.
using OmegaFamily = std::function<PerturbationPtr(const std::vector<qreal>& omega)>;

struct StepResult {
  AffineTrig R, F;
  qreal energy_shift = 0;                // R_0 at I = 0
  std::vector<qreal> frequency_shift;    // grad_I R_0
  std::vector<qreal> phi;                // corrected frequency parameter (equals omega without a family)
  bool frequency_corrected = false;
  double eps = 0.0;                      // proxy of P at (s, r)
  double eps_plus = 0.0;                 // proxy of P_+ at (s - 5 sigma, eta r)
  double bound_shape = 0.0;              // eps^2/(r sigma^(tau+1)) + (eta^2 + sigma^-n e^{-K sigma}) eps
  double measured_C = 0.0;               // eps_plus / bound_shape
  double homological_residual = 0.0;
  double symplectic_defect = 0.0;
  int flow_steps = 0;
  Smallness smallness;
  StepParams params;
  Hamiltonian next;
  nlohmann::json to_json() const;
};

// Time-one map of the Hamiltonian flow of an affine trigonometric F with a fixed number of RK4 steps.
std::pair<QVec, QVec> flow(const AffineTrig& F, const QVec& th, const QVec& I, qreal t, int steps);

StepResult kam_step(const Hamiltonian& H, const StepParams& p, const OmegaFamily& family = {});

// Desk-scale chain: sigma_{j+1} = shrink sigma_j, s_{j+1} = s_j - 5 sigma_j, r_{j+1} = eta r_j.
struct ChainOptions {
  int steps = 3;
  double sigma0 = 0.08;
  double shrink = 0.5;
  double s0 = 0.9;
  double r0 = 0.9;
  double eta = 0.12;
  int K_max = 24;
  double kappa = 0.1;
  double tau = 1.2;
  double c0 = 1.0;
  bool enforce_smallness = false;
  double roundoff_floor = 1e-30;  // eps below floor * eps_0 is roundoff and left out of the slope fit
};

struct ChainRow {
  int j = 0;
  double eps = 0.0;
  double sigma = 0.0, s = 0.0, r = 0.0, h = 0.0;
  int K = 0;
  Smallness smallness;
  double homological_residual = 0.0;
  double symplectic_defect = 0.0;
  double frequency_drift = 0.0;
  double measured_C = 0.0;
  int flow_steps = 0;
};

struct ChainReport {
  std::vector<ChainRow> rows;  // rows[j].eps is the proxy of P_j
  double slope = 0.0;          // fit of log eps_{j+1} against log eps_j
  bool slope_defined = false;
  int fitted_pairs = 0;
  nlohmann::json to_json() const;
};

ChainReport kam_chain(const Hamiltonian& H0, const ChainOptions& opt = {});
void write_chain_csv(std::ostream& os, const ChainReport& rep);

// ---------------------------------------------------------------------------
// Iteration schedule.

struct ScheduleParams {
  int n = 1;
  double tau = 1.2;
  double vartheta = 0.25;
  double vartheta0 = 1.5;
  double C0 = 2.0;
  double c0 = 1.0;
  double sigma0 = 1.0 / 40;
  double E0 = 1e-4;
  double eps_hat = 1.0;
  int m = 0;
  std::optional<int> J;       // defaults to ceil(m (tau + 1) / vartheta)
  int jmax = 50;
  bool ell0_doubled = false;  // ell_0 = 2 tau + 2 + 2 vartheta0 instead of 2 tau + 2 + vartheta0
  bool strict = false;        // throw when E0 >= eta0^2 instead of flagging row 0
};

struct ScheduleRow {
  int j = 0;
  double s = 0, sigma = 0, K = 0, u = 0, nu = 0;
  // natural logarithms: the sequences leave double range long before j = 50
  double log_eta = 0, log_r = 0, log_E = 0, log_eps = 0, log_h = 0;
  double p = 0, q = 0, q_first = 0;
  // margins in log form (>= 0 means the inequality holds; eta_window needs > 0)
  double a = 0, b = 0, c = 0, d = 0, sigma_power = 0, eta_floor = 0, nu_sum = 0, eta_window = 0, domain = 0;
  // name of the first failing condition, empty when all hold
  std::string failing() const;
};

struct Schedule {
  ScheduleParams params;
  double delta = 0, s0 = 0, eta0 = 0, u0 = 0, vartheta1 = 0, ell0 = 0, ell_m = 0;
  int J = 0;
  std::vector<ScheduleRow> rows;
  int first_failure = -1;             // first j with a failing flag
  std::string first_failure_flag;
  bool all_ok() const { return first_failure < 0; }
  nlohmann::json to_json() const;
};

Schedule build_schedule(const ScheduleParams& p);
void write_schedule_csv(std::ostream& os, const Schedule& s);

}  // namespace bk::kam
