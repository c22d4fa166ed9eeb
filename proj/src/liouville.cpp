#include "bkam/liouville.hpp"

#include <boost/math/tools/toms748_solve.hpp>
#include <cmath>

#include "bkam/errors.hpp"
#include "bkam/numerics.hpp"

namespace bk::liouville {

using num::pi;

namespace {

double gl(const Fn& g, double a, double b, int n) {
  const auto& r = num::gauss_legendre(n);
  double acc = 0.0;
  for (size_t i = 0; i < r.x.size(); ++i) acc += r.w[i] * g(a + (b - a) * r.x[i]);
  return acc * (b - a);
}

// Root of g on [a, b] given a sign change, polished with Newton when dg is supplied.
double solve(const Fn& g, const Fn& dg, double a, double b) {
  double ga = g(a), gb = g(b);
  if (ga == 0.0) return a;
  if (gb == 0.0) return b;
  if ((ga > 0) == (gb > 0)) throw TurningPointFailure("no sign change in bracket");
  boost::uintmax_t it = 200;
  auto r = boost::math::tools::toms748_solve(g, a, b, ga, gb, boost::math::tools::eps_tolerance<double>(53), it);
  double x = 0.5 * (r.first + r.second);
  if (dg) {
    for (int k = 0; k < 2; ++k) {
      double d = dg(x);
      if (d == 0.0) break;
      double nx = x - g(x) / d;
      if (nx < a || nx > b) break;
      x = nx;
    }
  }
  return x;
}

// First sign change of g scanning from x0 toward x1.
double scan_root(const Fn& g, const Fn& dg, double x0, double x1, int steps = 256) {
  double prev = x0, gp = g(x0);
  for (int i = 1; i <= steps; ++i) {
    double x = x0 + (x1 - x0) * i / steps;
    double gx = g(x);
    if (gx == 0.0) return x;
    if ((gx > 0) != (gp > 0)) return solve(g, dg, std::min(prev, x), std::max(prev, x));
    prev = x;
    gp = gx;
  }
  throw TurningPointFailure("no root between " + std::to_string(x0) + " and " + std::to_string(x1));
}

double require_jet(const std::optional<double>& v, const char* name) {
  if (!v) throw JetMissing(std::string("jet coefficient ") + name + " not available");
  return *v;
}

}  // namespace

Profile ellipse_profile(double a, double b) {
  if (!(a > b) || !(b > 0.0)) throw InvalidArgument("ellipse profile needs a > b > 0");
  const double eps = std::sqrt((a - b) * (a + b));
  if (eps < 1e-8) throw InvalidArgument("focal distance below 1e-8: circle has no Liouville foci");
  const double c2 = 4.0 * eps * eps * pi * pi;  // (2 pi eps)^2
  Profile p;
  p.f = [c2](double x) { double s = std::sin(2 * pi * x); return c2 * s * s; };
  p.df = [c2](double x) { return c2 * 2 * pi * std::sin(4 * pi * x); };
  p.d2f = [c2](double x) { return c2 * 8 * pi * pi * std::cos(4 * pi * x); };
  p.q = [c2](double y) { double s = std::sinh(2 * pi * y); return -c2 * s * s; };
  p.dq = [c2](double y) { return -c2 * 2 * pi * std::sinh(4 * pi * y); };
  p.d2q = [c2](double y) { return -c2 * 8 * pi * pi * std::cosh(4 * pi * y); };
  p.N = std::atanh(b / a) / (2 * pi);
  p.alpha0 = c2;
  p.alpha1 = -4 * pi * pi * c2;
  p.alpha2 = 16 * std::pow(pi, 4) / 3 * c2;
  p.eps = eps;
  return p;
}

void complete_jet(Profile& p) {
  if (!p.f || !p.d2f) throw JetMissing("profile has no f evaluator");
  const double x = 0.25;
  if (!p.alpha0) p.alpha0 = p.f(x);
  if (!p.alpha1) p.alpha1 = 0.5 * p.d2f(x);
  if (!p.alpha2) {
    auto d4 = [&](double h) { return (p.d2f(x + h) - 2 * p.d2f(x) + p.d2f(x - h)) / (h * h); };
    double h = 1e-3;
    double r = (16 * d4(h / 4) - d4(h / 2)) / 15;  // Richardson
    p.alpha2 = r / 24.0;
  }
}

InvariantReport check_invariants(const Profile& p) {
  InvariantReport r;
  r.parity_ok = r.positivity_ok = true;
  for (int i = 1; i < 200; ++i) {
    double x = 0.5 * i / 200, y = p.N * i / 200;
    if (std::abs(p.f(x) - p.f(-x)) > 1e-12 * std::max(1.0, std::abs(p.f(x)))) r.parity_ok = false;
    if (std::abs(p.q(y) - p.q(-y)) > 1e-12 * std::max(1.0, std::abs(p.q(y)))) r.parity_ok = false;
    for (int j = 0; j <= 20; ++j) {
      double yy = -p.N + 2 * p.N * j / 20;
      if (!(p.f(x) - p.q(yy) > 0)) r.positivity_ok = false;
    }
  }
  double a0 = p.alpha0 ? *p.alpha0 : p.f(0.25);
  double a1 = p.alpha1 ? *p.alpha1 : 0.5 * p.d2f(0.25);
  r.morse_ok = a0 > 0 && a1 < 0;
  r.classical_iv = p.dq && p.dq(p.N) < 0;
  r.classical_v = true;
  for (int i = 0; i < 200; ++i)
    if (!(p.f(0.25 * (i + 1) / 200) > p.f(0.25 * i / 200))) r.classical_v = false;
  return r;
}

std::pair<double, double> turning_points(const Profile& p, double h) {
  const double a0 = require_jet(p.alpha0, "alpha0");
  if (!(h > 0.0) || h > a0) throw LevelOutOfRange("h must lie in (0, alpha0]");
  if (h == a0) return {0.25, 0.25};
  Fn g = [&](double x) { return p.f(x) - h; };
  double lo = scan_root(g, p.df, 0.25, 0.0);
  double hi = scan_root(g, p.df, 0.25, 0.5);
  return {lo, hi};
}

namespace {
// Integrals over [x', x''] after x = x' + (x'' - x')(1 - cos u)/2.
struct XInt {
  double I = 0.0, dI = 0.0;
};
XInt x_integrals(const Profile& p, double h, double lo, double hi, int n) {
  XInt r;
  const auto& q = num::gauss_legendre(n);
  const double w = 0.5 * (hi - lo);
  for (size_t i = 0; i < q.x.size(); ++i) {
    double u = pi * q.x[i];
    double x = lo + w * (1 - std::cos(u));
    double jac = w * std::sin(u) * pi * q.w[i];
    double d = std::max(p.f(x) - h, 1e-300);
    double sq = std::sqrt(d);
    r.I += 2 * sq * jac;
    r.dI -= jac / sq;
  }
  return r;
}
}  // namespace

std::pair<double, double> dI_at_top(const Profile& p, const Options& opt) {
  const double a0 = require_jet(p.alpha0, "alpha0");
  const double span = opt.extrap_span * a0;
  std::vector<double> t, v;
  for (int i = 0; i < opt.extrap_points; ++i) {
    double ti = 0.5 * (1 - std::cos((i + 0.5) * pi / opt.extrap_points));
    double h = a0 - ti * span;
    auto [lo, hi] = turning_points(p, h);
    t.push_back(ti);
    v.push_back(x_integrals(p, h, lo, hi, opt.nodes).dI);
  }
  auto fit = num::polyfit(t, v, opt.extrap_degree);
  return {fit.coef(0), -fit.coef(1) / span};
}

Actions actions(const Profile& p, double h, const Options& opt) {
  const double a0 = require_jet(p.alpha0, "alpha0");
  if (!(h > 0.0) || h > a0) throw LevelOutOfRange("h must lie in (0, alpha0]");
  Actions a;
  a.h = h;
  a.K = 4 * gl([&](double y) { return std::sqrt(h - p.q(y)); }, 0.0, p.N, opt.nodes);
  a.dK = 2 * gl([&](double y) { return 1.0 / std::sqrt(h - p.q(y)); }, 0.0, p.N, opt.nodes);
  auto [lo, hi] = turning_points(p, h);
  a.x_lo = lo;
  a.x_hi = hi;
  if (h == a0) {
    a.I = 0.0;
    a.dI = dI_at_top(p, opt).first;
  } else {
    auto xi = x_integrals(p, h, lo, hi, opt.nodes);
    a.I = xi.I;
    a.dI = xi.dI;
  }
  return a;
}

double rotation_function(const Profile& p, double h, const Options& opt) {
  auto a = actions(p, h, opt);
  return a.dK / a.dI;
}

double rotational_rotation(const Profile& p, double h, const Options& opt) {
  const double qN = p.q(p.N);
  if (!(h > qN) || !(h < 0.0)) throw LevelOutOfRange("h must lie in (q(N), 0)");
  Fn g = [&](double y) { return p.q(y) - h; };
  double yh = scan_root(g, p.dq, 0.0, p.N);
  const auto& r = num::gauss_legendre(opt.nodes);
  const double w = p.N - yh;
  double Ty = 0.0;
  for (size_t i = 0; i < r.x.size(); ++i) {
    double u = 0.5 * pi * r.x[i];
    double y = yh + w * (1 - std::cos(u));
    double jac = w * std::sin(u) * 0.5 * pi * r.w[i];
    Ty += 2 * jac / std::sqrt(std::max(h - p.q(y), 1e-300));
  }
  const int m = 1024;
  double Tx = 0.0;
  for (int i = 0; i < m; ++i) Tx += 1.0 / std::sqrt(p.f(double(i) / m) - h);
  Tx /= m;
  return Ty / Tx;
}

double ellipse_dKdI(double N) { return -(2 / pi) * std::atan(std::sinh(2 * pi * N)); }

double ellipse_d2KdI2(double eps, double N) {
  double sh = std::sinh(2 * pi * N), ch = std::cosh(2 * pi * N);
  return -sh / (2 * eps * pi * pi * ch * ch);
}

nlohmann::json TwistReport::to_json() const {
  nlohmann::json j;
  j["dKdI_integral"] = dKdI_integral;
  j["d2KdI2_integral"] = d2KdI2_integral;
  j["dKdI_quadrature"] = dKdI_quadrature;
  j["d2KdI2_quadrature"] = d2KdI2_quadrature;
  if (dKdI_closed) j["dKdI_closed"] = *dKdI_closed;
  if (d2KdI2_closed) j["d2KdI2_closed"] = *d2KdI2_closed;
  j["max_discrepancy"] = max_discrepancy;
  j["twisted"] = twisted;
  return j;
}

TwistReport twist_report(const Profile& p, const Options& opt) {
  const double a0 = require_jet(p.alpha0, "alpha0");
  const double a1 = require_jet(p.alpha1, "alpha1");
  const double a2 = require_jet(p.alpha2, "alpha2");
  TwistReport r;
  const double A = 2 * gl([&](double y) { return 1.0 / std::sqrt(a0 - p.q(y)); }, 0.0, p.N, opt.nodes);
  const double B3 = 2 * gl([&](double y) { return std::pow(a0 - p.q(y), -1.5); }, 0.0, p.N, opt.nodes);
  r.dKdI_integral = -(std::sqrt(-a1) / pi) * A;
  r.d2KdI2_integral = (a1 / (4 * pi * pi)) * (2 * B3 - (3 * a2 / (a1 * a1)) * A);

  auto [dI, d2I] = dI_at_top(p, opt);
  const double dK = A, d2K = -0.5 * B3;
  r.dKdI_quadrature = dK / dI;
  r.d2KdI2_quadrature = (d2K - (dK / dI) * d2I) / (dI * dI);

  std::vector<double> v1 = {r.dKdI_integral, r.dKdI_quadrature};
  std::vector<double> v2 = {r.d2KdI2_integral, r.d2KdI2_quadrature};
  if (p.eps) {
    r.dKdI_closed = ellipse_dKdI(p.N);
    r.d2KdI2_closed = ellipse_d2KdI2(*p.eps, p.N);
    v1.push_back(*r.dKdI_closed);
    v2.push_back(*r.d2KdI2_closed);
  }
  auto spread = [](const std::vector<double>& v) {
    double m = 0;
    for (double a : v)
      for (double b : v) m = std::max(m, std::abs(a - b) / std::max(std::abs(a), std::abs(b)));
    return m;
  };
  r.max_discrepancy = std::max(spread(v1), spread(v2));
  r.twisted = std::abs(r.d2KdI2_integral) > 1e-12;
  return r;
}

std::vector<ResonantLevel> resonant_levels(double Nmax) {
  std::vector<ResonantLevel> out;
  for (double rho : {-0.25, -1.0 / 3.0, -0.5, -2.0 / 3.0, -0.75}) {
    auto g = [rho](double N) { return ellipse_dKdI(N) - rho; };
    double lo = 0.0, hi = Nmax;
    if ((g(lo) > 0) == (g(hi) > 0)) continue;
    // plain bisection; the function is strictly decreasing in N
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      double mid = 0.5 * (lo + hi);
      if (g(mid) > 0) lo = mid; else hi = mid;
    }
    out.push_back({rho, 0.5 * (lo + hi)});
  }
  return out;
}

double radon(const Profile& p, const Fn& K, double h, int nodes) {
  const double qN = p.q(p.N);
  if (!(h > qN) || !(h < 0.0)) throw LevelOutOfRange("Radon levels lie in (q(N), 0)");
  double num = 0.0, mass = 0.0;
  for (int i = 0; i < nodes; ++i) {
    double x = double(i) / nodes;
    double fx = p.f(x);
    double lam = 1.0 / std::sqrt(fx - h);
    num += K(x) / std::sqrt(fx - qN) * lam;
    mass += lam;
  }
  // mass normalizes the Leray form to a probability measure
  return std::sqrt(h - qN) * num / mass;
}

MomentReport radon_moments(const Profile& p, const Fn& K, int count, bool project_symmetric, double tol) {
  const double qN = p.q(p.N);
  Fn K1 = [&](double x) { return K(x) / std::sqrt(p.f(x) - qN); };
  Fn Ks = K1;
  if (project_symmetric) {
    Ks = [&](double x) { return 0.25 * (K1(x) + K1(-x) + K1(0.5 - x) + K1(x - 0.5)); };
  } else {
    for (int i = 0; i <= 64; ++i) {
      double x = 0.5 * i / 64.0;
      double v = K1(x);
      if (std::abs(v - K1(-x)) > 1e-10 * std::max(1.0, std::abs(v)) ||
          std::abs(v - K1(0.5 - x)) > 1e-10 * std::max(1.0, std::abs(v)))
        throw SymmetryViolation("boundary function is not invariant at x = " + std::to_string(x));
    }
  }
  MomentReport r;
  for (int k = 0; k < count; ++k) {
    double e = -k - 0.5;
    double m = gl([&](double x) { return Ks(x) * std::pow(p.f(x) - qN, e); }, 0.0, 0.25, 96);
    double ref = gl([&](double x) { return std::pow(p.f(x) - qN, e); }, 0.0, 0.25, 96);
    r.moments.push_back(m);
    r.normalized.push_back(m / ref);
    if (r.first_nonzero < 0 && std::abs(m / ref) > tol) r.first_nonzero = k;
  }
  return r;
}

}  // namespace bk::liouville
