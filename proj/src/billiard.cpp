#include "bkam/billiard.hpp"

#include <boost/math/tools/toms748_solve.hpp>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "bkam/errors.hpp"
#include "bkam/numerics.hpp"

namespace bk {

using num::two_pi;

namespace {
inline double cross(const Vec2& u, const Vec2& v) { return u.x() * v.y() - u.y() * v.x(); }
}  // namespace

double arc_delta(double s, double s2, double L) {
  double d = num::wrap(s2 - s, L);
  if (d >= 0.5 * L) d -= L;
  return d;
}

StepResult step_full(const BoundaryCurve& c, const PhasePoint& rho, double theta_hint,
                     const StepOptions& opt) {
  const double p = rho.p;
  if (!(std::abs(p) < 1.0 - 1e-12)) throw GlancingRay("|p| too close to 1 (p = " + std::to_string(p) + ")");
  const double q = std::sqrt((1.0 - p) * (1.0 + p));
  if (q < opt.glancing_sin) throw GlancingRay("incidence angle below threshold");
  const double th0 = std::isfinite(theta_hint) ? theta_hint : c.theta_of_s(rho.s);
  const Frame f0 = c.frame_theta(th0);
  const Vec2 P = f0.pos;
  const Vec2 d = p * f0.tangent + q * f0.normal;
  const double alpha = std::atan2(q, p);

  // Angle from d to gamma(theta) - P; increases from -alpha to pi - alpha.
  auto h = [&](double th) {
    Vec2 w = c.position_at(th) - P;
    return std::atan2(cross(d, w), d.dot(w));
  };
  const int sectors = 64;
  double lo = th0, flo = -alpha, hi = th0 + two_pi, fhi = M_PI - alpha;
  for (int i = 1; i < sectors; ++i) {
    double th = th0 + two_pi * i / sectors;
    double v = h(th);
    if (v >= 0.0) {
      hi = th;
      fhi = v;
      break;
    }
    lo = th;
    flo = v;
  }
  double root;
  if (fhi == 0.0) {
    root = hi;
  } else {
    boost::uintmax_t iters = 200;
    auto r = boost::math::tools::toms748_solve(h, lo, hi, flo, fhi,
                                               boost::math::tools::eps_tolerance<double>(52), iters);
    root = 0.5 * (r.first + r.second);
  }
  // Newton polish on the signed distance to the ray.
  for (int it = 0; it < 3; ++it) {
    Vec2 w = c.position_at(root) - P;
    Vec2 tg(-std::sin(root), std::cos(root));
    double g = cross(d, w);
    double dg = cross(d, c.rho(root) * tg);
    if (dg == 0.0) break;
    double step = g / dg;
    if (!(std::abs(step) < 1e-6)) break;
    root -= step;
    if (std::abs(step) < 1e-17) break;
  }
  if (!(root > th0 && root < th0 + two_pi)) throw NoIntersection("root left its bracket");
  const Frame f1 = c.frame_theta(root);
  StepResult out;
  out.chord = (f1.pos - P).norm();
  if (!(out.chord > 0.0)) throw NoIntersection("zero chord");
  const double p1 = d.dot(f1.tangent);
  const double q1 = std::sqrt(std::max(0.0, (1.0 - p1) * (1.0 + p1)));
  if (q1 < opt.glancing_sin) throw GlancingRay("exit angle below threshold");
  out.theta_next = num::wrap(root, two_pi);
  out.next.s = num::wrap(c.s_of_theta(root), c.perimeter());
  out.next.p = p1;
  return out;
}

PhasePoint step(const BoundaryCurve& c, const PhasePoint& rho, const StepOptions& opt) {
  return step_full(c, rho, NAN, opt).next;
}

OrbitSegment iterate(const BoundaryCurve& c, const PhasePoint& rho, int n, const StepOptions& opt) {
  OrbitSegment seg;
  seg.points.reserve(n + 1);
  seg.points.push_back({num::wrap(rho.s, c.perimeter()), rho.p});
  double th = c.theta_of_s(rho.s);
  for (int j = 0; j < n; ++j) {
    StepResult r;
    try {
      r = step_full(c, seg.points.back(), th, opt);
    } catch (const GlancingRay& e) {
      throw GlancingRay(std::string(e.what()) + " at index " + std::to_string(j));
    }
    seg.points.push_back(r.next);
    seg.chords.push_back(r.chord);
    seg.length += r.chord;
    th = r.theta_next;
  }
  return seg;
}

Eigen::Matrix2d jacobian(const BoundaryCurve& c, const PhasePoint& rho, const StepOptions& opt) {
  const double th0 = c.theta_of_s(rho.s);
  StepResult r = step_full(c, rho, th0, opt);
  const double k0 = 1.0 / c.rho(th0), k1 = 1.0 / c.rho(r.theta_next);
  const double sa = std::sqrt((1.0 - rho.p) * (1.0 + rho.p));
  const double sb = std::sqrt((1.0 - r.next.p) * (1.0 + r.next.p));
  const double l = r.chord;
  const double lss = sa * sa / l - k0 * sa;
  const double ltt = sb * sb / l - k1 * sb;
  const double lst = sa * sb / l;
  Eigen::Matrix2d J;
  J(0, 0) = -lss / lst;
  J(0, 1) = -1.0 / lst;
  J(1, 0) = lst - ltt * lss / lst;
  J(1, 1) = -ltt / lst;
  return J;
}

Eigen::Matrix2d jacobian_fd(const BoundaryCurve& c, const PhasePoint& rho, double h, const StepOptions& opt) {
  const double L = c.perimeter();
  const PhasePoint base = step(c, rho, opt);
  Eigen::Matrix2d J;
  for (int col = 0; col < 2; ++col) {
    PhasePoint a = rho, b = rho;
    if (col == 0) {
      a.s += h;
      b.s -= h;
    } else {
      a.p += h;
      b.p -= h;
    }
    PhasePoint fa = step(c, a, opt), fb = step(c, b, opt);
    J(0, col) = (arc_delta(base.s, fa.s, L) - arc_delta(base.s, fb.s, L)) / (2 * h);
    J(1, col) = (fa.p - fb.p) / (2 * h);
  }
  return J;
}

double generating_value(const BoundaryCurve& c, double s, double s2) {
  const double L = c.perimeter();
  if (std::abs(arc_delta(s, s2, L)) < 1e-14 * L) throw CoincidentPoints("s and s' coincide mod L");
  return -(c.frame(s).pos - c.frame(s2).pos).norm();
}

void write_csv(std::ostream& os, const OrbitSegment& seg) {
  os << "index,s,p,chord\n" << std::setprecision(17);
  for (size_t j = 0; j < seg.points.size(); ++j) {
    os << j << ',' << seg.points[j].s << ',' << seg.points[j].p << ',';
    if (j < seg.chords.size()) os << seg.chords[j];
    os << '\n';
  }
}

}  // namespace bk
