#include "bkam/melrose.hpp"

#include <algorithm>
#include <cmath>

#include "bkam/errors.hpp"
#include "bkam/numerics.hpp"

namespace bk::melrose {

using num::pi;

namespace {

// Periodic trapezoid sums in the normal angle: ds = rho dtheta, kappa = 1/rho,
// d kappa/ds = -rho' / rho^3.
std::pair<double, double> curvature_sums(const BoundaryCurve& c, int n) {
  double s1 = 0, s2 = 0;
  const double h = 2 * pi / n;
  for (int j = 0; j < n; ++j) {
    double th = h * j, r = c.rho(th), dr = c.drho(th);
    s1 += std::cbrt(r);
    s2 += 9 / std::cbrt(r) + 8 * dr * dr * std::pow(r, -7.0 / 3.0);
  }
  return {s1 * h, s2 * h};
}

}  // namespace

CurvatureInvariants invariants_from_curvature(const BoundaryCurve& c) {
  int n = 64;
  auto prev = curvature_sums(c, n);
  for (;;) {
    auto cur = curvature_sums(c, 2 * n);
    n *= 2;
    bool done = std::abs(cur.first - prev.first) <= 1e-13 * std::abs(cur.first) &&
                std::abs(cur.second - prev.second) <= 1e-13 * std::abs(cur.second);
    prev = cur;
    if (done || n >= (1 << 20)) break;
  }
  CurvatureInvariants out;
  out.dR0 = -prev.first / pi;
  out.d2R0 = prev.second / (2160 * pi);
  out.nodes = n;
  return out;
}

nlohmann::json InterpolatingFit::to_json() const {
  return {{"l", l},         {"dR0", dR0},           {"d2R0", d2R0},         {"sigma_l", sigma_l},
          {"sigma_dR0", sigma_dR0}, {"sigma_d2R0", sigma_d2R0}, {"coef", coef}, {"rms", rms},
          {"max_omega", max_omega}};
}

// r(omega) = l + c1 omega^2 + c2 omega^4 + ... with r = R(u), omega = -8 sqrt(u) / R'(u):
// c1 = R'(0)^3 / 64, c2 = 5 R'(0)^4 R''(0) / 8192.
InterpolatingFit interpolating_fit(const BoundaryCurve& c, const std::vector<circles::InvariantCircleRecord>& records,
                                   const FitOptions& opt) {
  if (opt.degree < 1) throw InvalidArgument("fit degree must be at least 1");
  std::vector<double> w;
  for (auto& r : records) w.push_back(r.omega);
  std::sort(w.begin(), w.end());
  int distinct = w.empty() ? 0 : 1;
  for (size_t i = 1; i < w.size(); ++i)
    if (w[i] - w[i - 1] > 1e-12) ++distinct;
  if (distinct < std::max(opt.min_records, opt.degree + 1))
    throw InsufficientBoundaryApproach("need " + std::to_string(std::max(opt.min_records, opt.degree + 1)) +
                                       " distinct frequencies, got " + std::to_string(distinct));
  if (w.front() <= 0) throw InsufficientBoundaryApproach("frequencies must be positive");
  if (w.back() > opt.max_omega)
    throw InsufficientBoundaryApproach("max omega " + std::to_string(w.back()) + " exceeds " +
                                       std::to_string(opt.max_omega));
  for (auto& r : records)
    if (std::abs(r.perimeter - c.perimeter()) > 1e-9 * c.perimeter())
      throw InvalidArgument("record perimeter does not match the curve");

  std::vector<double> x, y, wt;
  for (auto& r : records) {
    x.push_back(r.omega * r.omega);
    y.push_back(-r.action);
    wt.push_back(1 / r.omega);
  }
  auto pf = num::polyfit(x, y, opt.degree, wt);
  InterpolatingFit out;
  out.coef.assign(pf.coef.data(), pf.coef.data() + pf.coef.size());
  out.rms = pf.rms;
  out.max_omega = w.back();
  out.l = pf.coef(0);
  out.sigma_l = std::sqrt(std::max(0.0, pf.cov(0, 0)));
  double c1 = pf.coef(1);
  if (!(c1 < 0)) throw InsufficientBoundaryApproach("caustic parameter does not decrease away from the boundary");
  double a = -std::cbrt(-64 * c1);
  double da1 = a / (3 * c1);
  out.dR0 = a;
  out.sigma_dR0 = std::abs(da1) * std::sqrt(std::max(0.0, pf.cov(1, 1)));
  if (opt.degree >= 2) {
    double k = 8192.0 / 5.0;
    double a4 = a * a * a * a;
    double b = k * pf.coef(2) / a4;
    out.d2R0 = b;
    Eigen::Vector2d g(-4 * b / a * da1, k / a4);
    Eigen::Matrix2d C = pf.cov.block(1, 1, 2, 2);
    out.sigma_d2R0 = std::sqrt(std::max(0.0, double(g.transpose() * C * g)));
  } else {
    out.d2R0 = NAN;
    out.sigma_d2R0 = NAN;
  }
  return out;
}

nlohmann::json MelroseReport::to_json() const {
  nlohmann::json rec = nlohmann::json::array();
  for (auto& r : records)
    rec.push_back({{"omega", r.omega}, {"I", r.action}, {"beta", r.beta}, {"residual", r.residual}});
  return {{"length", length},
          {"l", length / (2 * pi)},
          {"curvature", {{"dR0", curvature.dR0}, {"d2R0", curvature.d2R0}, {"nodes", curvature.nodes}}},
          {"fit", fit.to_json()},
          {"residual_l", residual_l},
          {"residual_dR0", residual_dR0},
          {"residual_d2R0", residual_d2R0},
          {"ratio_d2R0", ratio_d2R0},
          {"records", rec}};
}

std::vector<double> default_omegas() { return {0.19, 0.16, 0.13, 0.11, 0.09, 0.07, 0.05}; }

MelroseReport compare(const BoundaryCurve& c, std::vector<double> omegas, const FitOptions& opt,
                      const circles::CircleOptions& copt) {
  std::sort(omegas.begin(), omegas.end(), std::greater<>());
  omegas.erase(std::unique(omegas.begin(), omegas.end(), [](double a, double b) { return std::abs(a - b) <= 1e-12; }),
               omegas.end());
  if (int(omegas.size()) < std::max(opt.min_records, opt.degree + 1))
    throw InsufficientBoundaryApproach("too few distinct frequencies");
  if (omegas.back() <= 0 || omegas.front() > opt.max_omega)
    throw InsufficientBoundaryApproach("frequencies must lie in (0, " + std::to_string(opt.max_omega) + "]");

  MelroseReport rep;
  rep.length = c.perimeter();
  rep.curvature = invariants_from_curvature(c);
  for (double w : omegas) {
    circles::CircleSeed seed;
    if (!rep.records.empty()) seed.from = rep.records.back();
    rep.records.push_back(circles::find_circle(c, w, seed, copt));
  }
  rep.fit = interpolating_fit(c, rep.records, opt);
  rep.residual_l = std::abs(rep.fit.l - rep.length / (2 * pi));
  rep.residual_dR0 = std::abs(rep.fit.dR0 - rep.curvature.dR0);
  rep.residual_d2R0 = std::abs(rep.fit.d2R0 - rep.curvature.d2R0);
  rep.ratio_d2R0 = rep.fit.d2R0 / rep.curvature.d2R0;
  return rep;
}

}  // namespace bk::melrose
