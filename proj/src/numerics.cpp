#include "bkam/numerics.hpp"

#include <algorithm>
#include <boost/math/special_functions/legendre.hpp>
#include <cmath>
#include <fftw3.h>
#include <map>
#include <mutex>

namespace bk::num {

const QuadRule& gauss_legendre(int n) {
  static std::map<int, QuadRule> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  QuadRule r;
  auto zeros = boost::math::legendre_p_zeros<double>(n);
  std::vector<std::pair<double, double>> nodes;
  for (double z : zeros) {
    double d = boost::math::legendre_p_prime<double>(n, z);
    double w = 2.0 / ((1.0 - z * z) * d * d);
    nodes.push_back({z, w});
    if (z != 0.0) nodes.push_back({-z, w});
  }
  std::sort(nodes.begin(), nodes.end());
  for (auto& [z, w] : nodes) {
    r.x.push_back(0.5 * (z + 1.0));
    r.w.push_back(0.5 * w);
  }
  return cache.emplace(n, std::move(r)).first->second;
}

double wrap(double x, double period) {
  double r = std::fmod(x, period);
  if (r < 0) r += period;
  if (r >= period) r -= period;
  return r;
}

double wrap_pi(double x) { return wrap(x + pi, two_pi) - pi; }

std::vector<double> birkhoff_weights(int n) {
  std::vector<double> w(n);
  double sum = 0.0;
  for (int j = 0; j < n; ++j) {
    double t = double(j + 1) / double(n + 1);
    w[j] = std::exp(-1.0 / (t * (1.0 - t)));
    sum += w[j];
  }
  for (double& v : w) v /= sum;
  return w;
}

PolyFit polyfit(const std::vector<double>& x, const std::vector<double>& y, int degree,
                const std::vector<double>& weights) {
  const int m = static_cast<int>(x.size());
  Eigen::MatrixXd A(m, degree + 1);
  Eigen::VectorXd b(m);
  for (int i = 0; i < m; ++i) {
    double sw = weights.empty() ? 1.0 : std::sqrt(weights[i]);
    double p = 1.0;
    for (int d = 0; d <= degree; ++d) {
      A(i, d) = sw * p;
      p *= x[i];
    }
    b(i) = sw * y[i];
  }
  PolyFit out;
  auto qr = A.colPivHouseholderQr();
  out.coef = qr.solve(b);
  Eigen::VectorXd res = A * out.coef - b;
  int dof = std::max(1, m - degree - 1);
  double s2 = res.squaredNorm() / dof;
  out.rms = std::sqrt(res.squaredNorm() / std::max(1, m));
  out.cov = s2 * (A.transpose() * A).inverse();
  return out;
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  return polyfit(x, y, 1).coef(1);
}

std::mutex& fftw_planner_mutex() {
  static std::mutex mu;
  return mu;
}

std::vector<std::complex<double>> real_fourier(const std::vector<double>& samples) {
  const int n = int(samples.size());
  std::vector<double> in(samples);
  std::vector<std::complex<double>> out(n / 2 + 1);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(n, in.data(), reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  for (auto& c : out) c /= double(n);
  return out;
}

std::vector<double> eval_fourier(const std::vector<std::complex<double>>& coef, int n, double shift) {
  std::vector<std::complex<double>> in(n / 2 + 1, 0.0);
  const int m = std::min<int>(int(coef.size()), n / 2 + 1);
  for (int k = 0; k < m; ++k) in[k] = coef[k] * std::polar(1.0, k * shift);
  // a Nyquist term of the source cannot be represented on an even grid without aliasing
  if (n % 2 == 0 && m == n / 2 + 1) in[n / 2] = std::complex<double>(in[n / 2].real(), 0.0);
  std::vector<double> out(n);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    plan = fftw_plan_dft_c2r_1d(n, reinterpret_cast<fftw_complex*>(in.data()), out.data(), FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  return out;
}

}  // namespace bk::num
