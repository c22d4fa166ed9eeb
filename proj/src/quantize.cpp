#include "bkam/quantize.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <Eigen/Dense>

#include "bkam/errors.hpp"
#include "bkam/numerics.hpp"

namespace bk::quantize {

using num::pi;
using num::two_pi;

namespace {

using Series = std::vector<double>;

Series mul(const Series& a, const Series& b, int order) {
  Series r(order + 1, 0.0);
  for (int i = 0; i <= order && i < int(a.size()); ++i) {
    if (a[i] == 0.0) continue;
    for (int j = 0; i + j <= order && j < int(b.size()); ++j) r[i + j] += a[i] * b[j];
  }
  return r;
}

// sum_m coef[m] s^m truncated at order, with s(0) = 0
Series compose(const Series& coef, const Series& s, int order) {
  Series r(order + 1, 0.0), p(order + 1, 0.0);
  p[0] = 1.0;
  for (int m = 0; m < int(coef.size()); ++m) {
    if (m > 0) p = mul(p, s, order);
    for (int i = 0; i <= order; ++i) r[i] += coef[m] * p[i];
  }
  return r;
}

double horner(const Series& c, double t) {
  double v = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) v = v * t + *it;
  return v;
}

Series derivative(const Series& c) {
  Series d;
  for (std::size_t m = 1; m < c.size(); ++m) d.push_back(double(m) * c[m]);
  return d;
}

}  // namespace

double first_target(int k, const Maslov& m) { return k + m.theta0 / 4.0; }

double second_target(int kn, const Maslov& m) {
  return m.alt_sign ? two_pi * kn - pi * m.theta / 2.0 : two_pi * (kn + m.theta / 4.0);
}

// ---------------------------------------------------------------------------

double ActionModel::beta_at(double omega) const { return horner(beta, omega - omega0); }
double ActionModel::I_at(double omega) const { return horner(derivative(beta), omega - omega0); }
double ActionModel::dI_at(double omega) const { return horner(derivative(derivative(beta)), omega - omega0); }

double ActionModel::omega_of(double I) const {
  double w = omega0;
  for (int it = 0; it < 60; ++it) {
    double d = dI_at(w);
    if (d == 0.0) throw NoConvergence("dI/domega vanishes in the action model");
    double step = (I_at(w) - I) / d;
    w -= step;
    if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(w))) return w;
  }
  if (std::abs(I_at(w) - I) <= 1e-13 * std::max(1.0, std::abs(I))) return w;
  throw NoConvergence("omega(I) Newton did not settle");
}

double ActionModel::L(double I) const {
  double w = omega_of(I);
  return w * I - beta_at(w);
}

std::vector<double> ActionModel::L_taylor(int order) const {
  if (order < 0) throw InvalidArgument("negative Taylor order");
  // x = I(omega0 + t) - I0 = sum_{m>=1} i_m t^m, reverted to t(x)
  Series Ic = derivative(beta);
  if (Ic.size() < 2 || Ic[1] == 0.0) throw DegenerateDeterminant("dI/domega vanishes at omega0");
  Series x(order + 1, 0.0);
  if (order >= 1) x[1] = 1.0;
  Series t(order + 1, 0.0);
  Series high = Ic;  // terms of order >= 2
  high[0] = 0.0;
  high[1] = 0.0;
  for (int it = 0; it <= order; ++it) {
    Series h = compose(high, t, order);
    for (int i = 0; i <= order; ++i) t[i] = (x[i] - h[i]) / Ic[1];
  }
  // L = (omega0 + t)(I0 + x) - beta(t)
  Series w = t;
  w[0] += omega0;
  Series Ix(order + 1, 0.0);
  Ix[0] = I0();
  if (order >= 1) Ix[1] = 1.0;
  Series L = mul(w, Ix, order);
  Series b = compose(beta, t, order);
  for (int i = 0; i <= order; ++i) L[i] -= b[i];
  return L;
}

nlohmann::json ActionModel::to_json() const {
  return {{"omega0", omega0}, {"beta", beta}, {"I0", I0()}, {"L0", L0()}, {"D", D()}, {"fit_rms", fit_rms}};
}

ActionModel model_from_series(double omega0, std::vector<double> beta) {
  if (beta.size() < 3) throw InvalidArgument("action model needs beta up to second order");
  ActionModel m;
  m.omega0 = omega0;
  m.beta = std::move(beta);
  return m;
}

ActionModel model_from_circles(const BoundaryCurve& c, double omega0, const ModelOptions& opt) {
  if (opt.count < opt.degree / 2 + 2) throw InvalidArgument("too few circles for the fit degree");
  if (!(opt.half_width > 0)) throw InvalidArgument("half_width must be positive");
  const double hw = opt.half_width;
  std::vector<double> nodes;
  for (int i = 0; i < opt.count; ++i) {
    double w = omega0 + hw * (opt.count == 1 ? 0.0 : 2.0 * i / (opt.count - 1) - 1.0);
    // nudge off the excluded neighbourhoods of rationals
    for (int tries = 0; tries < 40 && !circles::is_diophantine(w, opt.circle.spec).accepted; ++tries)
      w += 1e-3 * hw;
    nodes.push_back(w);
  }
  std::vector<circles::InvariantCircleRecord> recs;
  for (double w : nodes) recs.push_back(circles::find_circle(c, w, {}, opt.circle));

  const int n = int(nodes.size()), d = opt.degree;
  Eigen::MatrixXd A(2 * n, d + 1);
  Eigen::VectorXd y(2 * n);
  for (int i = 0; i < n; ++i) {
    double s = (nodes[i] - omega0) / hw;
    for (int m = 0; m <= d; ++m) {
      A(i, m) = std::pow(s, m);
      A(n + i, m) = m == 0 ? 0.0 : m * std::pow(s, m - 1);
    }
    y(i) = recs[i].beta;
    y(n + i) = hw * recs[i].action;
  }
  Eigen::VectorXd g = A.colPivHouseholderQr().solve(y);
  Eigen::VectorXd res = A * g - y;
  res.tail(n) /= hw;
  ActionModel m;
  m.omega0 = omega0;
  m.beta.resize(d + 1);
  for (int k = 0; k <= d; ++k) m.beta[k] = g(k) / std::pow(hw, k);
  m.fit_rms = std::sqrt(res.squaredNorm() / (2 * n));
  return m;
}

// ---------------------------------------------------------------------------

namespace {

// Best mu0 for the integer pair: least squares of (mu I - A, (mu L - B)/2 pi).
Hit refine(double I, double L, long k, long kn, const Maslov& m) {
  const double A = first_target(int(k), m), B = second_target(int(kn), m);
  const double l = L / two_pi, b = B / two_pi;
  Hit h;
  h.k = k;
  h.kn = kn;
  h.mu0 = (I * A + l * b) / (I * I + l * l);
  h.distance = std::hypot(h.mu0 * I - A, h.mu0 * l - b);
  return h;
}

}  // namespace

std::vector<Hit> strong_search(double I, double L, double lambda_max, double tol, const SearchOptions& opt) {
  if (!std::isfinite(I) || !std::isfinite(L) || I == 0.0) throw InvalidArgument("I must be finite and nonzero");
  if (!(lambda_max >= 1)) throw InvalidArgument("lambda_max must be at least 1");
  if (!(tol >= 0)) throw InvalidArgument("tol must be nonnegative");
  if (opt.check_periodic) {
    for (int k = -opt.periodic_order; k <= opt.periodic_order; ++k)
      for (int kn = -opt.periodic_order; kn <= opt.periodic_order; ++kn) {
        if ((k == 0 && kn == 0) || std::abs(k) + std::abs(kn) > opt.periodic_order) continue;
        double lhs = two_pi * kn * I, rhs = L * k;
        if (std::abs(lhs - rhs) <= opt.periodic_tol * (std::abs(lhs) + std::abs(rhs)))
          throw PeriodicLine("2 pi k_n I = L k at q = (" + std::to_string(k) + ", " + std::to_string(kn) + ")");
      }
  }
  std::vector<Hit> hits;
  if (tol == 0.0) return hits;
  const Maslov& m = opt.maslov;
  // k + theta0/4 = lambda I over lambda in [1, lambda_max], widened by tol
  double a = I - tol, b = lambda_max * I + tol;
  if (I < 0) {
    a = lambda_max * I - tol;
    b = I + tol;
  }
  const long k_lo = long(std::floor(a - m.theta0 / 4.0)), k_hi = long(std::ceil(b - m.theta0 / 4.0));
  for (long k = k_lo; k <= k_hi; ++k) {
    double lam = first_target(int(k), m) / I;
    long kn0 = std::lround((lam * L - second_target(0, m)) / two_pi);
    for (long kn = kn0 - 1; kn <= kn0 + 1; ++kn) {
      Hit h = refine(I, L, k, kn, m);
      if (h.distance < tol && h.mu0 >= 1 && h.mu0 <= lambda_max) hits.push_back(h);
    }
  }
  std::sort(hits.begin(), hits.end(), [](const Hit& x, const Hit& y) { return x.mu0 < y.mu0; });
  return hits;
}

Hit nearest_seed(double I, double L, double lambda, const Maslov& m) {
  long k = std::lround(lambda * I - m.theta0 / 4.0);
  long kn = std::lround((lambda * L - second_target(0, m)) / two_pi);
  return refine(I, L, k, kn, m);
}

double signed_offset(const Hit& h, double I, const Maslov& m) {
  return std::copysign(h.distance, first_target(int(h.k), m) - h.mu0 * I);
}

Hit matched_seed(double I, double L, double lambda, double offset, const Maslov& m, double window) {
  if (!(lambda >= 1) || !(window > 0)) throw InvalidArgument("lambda >= 1 and window > 0 required");
  const double hi = lambda * (1 + window);
  long ka = std::lround(lambda * I - m.theta0 / 4.0), kb = std::lround(hi * I - m.theta0 / 4.0);
  if (ka > kb) std::swap(ka, kb);
  Hit best;
  bool found = false;
  for (long k = ka - 1; k <= kb + 1; ++k) {
    double lam = first_target(int(k), m) / I;
    long kn0 = std::lround((lam * L - second_target(0, m)) / two_pi);
    for (long kn = kn0 - 1; kn <= kn0 + 1; ++kn) {
      Hit h = refine(I, L, k, kn, m);
      if (h.mu0 < lambda || h.mu0 > hi) continue;
      if (!found || std::abs(signed_offset(h, I, m) - offset) < std::abs(signed_offset(best, I, m) - offset)) {
        best = h;
        found = true;
      }
    }
  }
  if (!found) throw InvalidArgument("no lattice point in the window");
  return best;
}

// ---------------------------------------------------------------------------

QuantizationRecord quasi_eigen(const Hit& seed, const ActionModel& model, const QuasiOptions& opt) {
  if (opt.M < 0) throw InvalidArgument("M must be nonnegative");
  const double D = model.D();
  if (!(D >= 1e-12)) throw DegenerateDeterminant("D = L - omega I = " + std::to_string(D));
  if (!(seed.mu0 >= 1)) throw InvalidArgument("mu0 must be at least 1");

  QuantizationRecord r;
  r.k = seed.k;
  r.kn = seed.kn;
  r.mu0 = seed.mu0;
  r.eps = 1.0 / seed.mu0;
  r.maslov = opt.maslov;
  r.M = opt.M;
  r.I = model.I0();
  r.L = model.L0();
  r.omega = model.omega0;
  r.D = D;
  const int M = opt.M;
  const double A = first_target(int(r.k), r.maslov), B = second_target(int(r.kn), r.maslov);
  const double W0 = A - r.mu0 * r.I, V0 = B - r.mu0 * r.L;
  if (std::hypot(W0, V0) > opt.seed_bound)
    throw PreconditionViolation("seed is off the quantization lattice: |(W0, V0)| = " +
                                std::to_string(std::hypot(W0, V0)));
  const double qn = std::hypot(double(r.k), double(r.kn));
  r.bound_ok = qn / opt.c0 <= r.mu0 && r.mu0 <= opt.c0 * qn;

  const Series Lt = model.L_taylor(M + 1);
  Series Q2(Lt.size(), 0.0);  // L(I + x) - L0 - omega x
  for (std::size_t m = 2; m < Lt.size(); ++m) Q2[m] = Lt[m];
  const int top = M + 1;
  r.c.assign(M + 1, 0.0);
  r.b.assign(M + 2, 0.0);
  for (int j = 0; j <= M; ++j) {
    double W = W0, V = V0;
    if (j > 0) {
      double cb = 0.0;  // [C delta]_j
      for (int q = 0; q <= j - 1; ++q) cb += r.c[q] * r.b[j - 1 - q];
      Series delta(top + 1, 0.0);
      for (int l = 0; l < j; ++l) delta[l + 1] = r.b[l];
      Series Q = compose(Q2, delta, top);
      double cq = 0.0;  // [C Q]_j
      for (int q = 0; q <= j - 2; ++q) cq += r.c[q] * Q[j - q];
      W = -cb;
      V = -(r.omega * cb + Q[j + 1] + cq);
    }
    r.W.push_back(W);
    r.V.push_back(V);
    r.c[j] = (V - r.omega * W) / D;
    r.b[j] = W - r.c[j] * r.I;
  }
  r.mu = r.mu0;
  for (int j = 0; j <= M; ++j) r.mu += r.c[j] * std::pow(r.eps, j);
  double WM1 = 0.0;
  for (int l = 0; l <= M; ++l)
    for (int q = M - l; q <= M; ++q) WM1 -= r.c[q] * r.b[l] * std::pow(r.eps, q + l - M);
  r.W.push_back(WM1);
  r.b[M + 1] = WM1 / (r.eps * r.mu);
  auto res = residual_check(r, model);
  r.first_residual = res.first;
  r.second_residual = res.second;
  return r;
}

Residuals residual_check(const QuantizationRecord& r, const ActionModel& model) {
  const double A = first_target(int(r.k), r.maslov), B = second_target(int(r.kn), r.maslov);
  const double zeta = A / r.mu;
  Residuals out;
  out.first = std::abs(r.mu * zeta - A) / std::max(1.0, std::abs(A));
  out.second = std::abs(r.mu * model.L(zeta) - B);
  double z = r.I;
  for (std::size_t l = 0; l < r.b.size(); ++l) z += r.b[l] * std::pow(r.eps, double(l + 1));
  out.series = std::abs(zeta - z);
  return out;
}

nlohmann::json QuantizationRecord::to_json() const {
  return {{"q", {k, kn}},
          {"mu0", mu0},
          {"eps", eps},
          {"mu", mu},
          {"maslov", {{"theta0", maslov.theta0}, {"theta", maslov.theta}, {"alt_sign", maslov.alt_sign}}},
          {"M", M},
          {"I", I},
          {"L", L},
          {"omega", omega},
          {"D", D},
          {"c", c},
          {"b", b},
          {"W", W},
          {"V", V},
          {"bound_ok", bound_ok},
          {"first_residual", first_residual},
          {"second_residual", second_residual}};
}

void write_hits_csv(std::ostream& os, const std::vector<Hit>& hits) {
  os.precision(17);
  os << "k,kn,mu0,distance\n";
  for (const auto& h : hits) os << h.k << ',' << h.kn << ',' << h.mu0 << ',' << h.distance << '\n';
}

void write_records_csv(std::ostream& os, const std::vector<QuantizationRecord>& recs) {
  os.precision(17);
  os << "k,kn,mu0,mu,D,first_residual,second_residual\n";
  for (const auto& r : recs)
    os << r.k << ',' << r.kn << ',' << r.mu0 << ',' << r.mu << ',' << r.D << ',' << r.first_residual << ','
       << r.second_residual << '\n';
}

}  // namespace bk::quantize
