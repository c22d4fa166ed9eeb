#pragma once
#include <Eigen/Dense>
#include <complex>
#include <mutex>
#include <vector>

namespace bk::num {

constexpr double pi = 3.14159265358979323846;
constexpr double two_pi = 2.0 * pi;

struct QuadRule {
  std::vector<double> x;
  std::vector<double> w;
};

// Gauss-Legendre rule mapped to [0, 1].
const QuadRule& gauss_legendre(int n);

// Reduce x into [0, period).
double wrap(double x, double period);
// Reduce x into [-pi, pi).
double wrap_pi(double x);

// Normalized exponential bump weights exp(-1/(t(1-t))) at t = (j+1)/(n+1).
std::vector<double> birkhoff_weights(int n);

struct PolyFit {
  Eigen::VectorXd coef;  // ascending powers
  Eigen::MatrixXd cov;
  double rms = 0.0;
};

// Weighted least squares polynomial fit in powers of x.
PolyFit polyfit(const std::vector<double>& x, const std::vector<double>& y, int degree,
                const std::vector<double>& weights = {});

// Ordinary least squares slope of y against x.
double slope(const std::vector<double>& x, const std::vector<double>& y);

// FFTW planning is not thread safe.
std::mutex& fftw_planner_mutex();

// Coefficients c_0..c_{n/2} of a real periodic sample, g = sum c_k e^{ik theta} (c_{-k} = conj c_k).
std::vector<std::complex<double>> real_fourier(const std::vector<double>& samples);
// Values of the trigonometric polynomial at theta_j + shift, theta_j = 2 pi j / n.
std::vector<double> eval_fourier(const std::vector<std::complex<double>>& coef, int n, double shift = 0.0);

}  // namespace bk::num
