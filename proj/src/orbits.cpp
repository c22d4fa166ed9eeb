#include "bkam/orbits.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>

#include "bkam/errors.hpp"
#include "bkam/numerics.hpp"

namespace bk::orbits {

using num::pi;
using num::two_pi;
using cd = std::complex<double>;

nlohmann::json PeriodicOrbit::to_json() const {
  return {{"m", m},          {"winding", winding},   {"vertices", vertices},
          {"momenta", momenta}, {"length", length},  {"residual", residual},
          {"closure_error", closure_error}, {"iterations", iterations}};
}

PeriodicOrbit find_periodic(const BoundaryCurve& c, int m, int winding, const std::vector<double>& seed,
                            const FindOptions& opt) {
  if (m < 2) throw InvalidArgument("period must be at least 2");
  if (int(seed.size()) != m) throw InvalidArgument("seed must have m vertices");
  if (winding < 1 || winding >= m) throw InvalidArgument("winding must lie in [1, m)");
  const double L = c.perimeter();
  Eigen::VectorXd s(m);
  for (int j = 0; j < m; ++j) s[j] = seed[j];

  std::vector<Frame> fr(m);
  std::vector<Vec2> u(m);
  std::vector<double> len(m);
  Eigen::VectorXd g(m);
  auto evaluate = [&]() {
    for (int j = 0; j < m; ++j) fr[j] = c.frame(s[j]);
    for (int j = 0; j < m; ++j) {
      Vec2 d = fr[(j + 1) % m].pos - fr[j].pos;
      len[j] = d.norm();
      if (len[j] < 1e-12) throw CoincidentPoints("vertices " + std::to_string(j) + " and " +
                                                 std::to_string((j + 1) % m) + " coincide");
      u[j] = d / len[j];
    }
    for (int j = 0; j < m; ++j) {
      int jm = (j + m - 1) % m;
      g[j] = u[jm].dot(fr[j].tangent) - u[j].dot(fr[j].tangent);
    }
  };

  PeriodicOrbit out;
  out.m = m;
  out.winding = winding;
  int it = 0;
  evaluate();
  for (; it < opt.max_iter; ++it) {
    if (g.lpNorm<Eigen::Infinity>() < 1e-14) break;
    Eigen::MatrixXd Hm = Eigen::MatrixXd::Zero(m, m);
    for (int j = 0; j < m; ++j) {
      int k = (j + 1) % m;
      const Frame &a = fr[j], &b = fr[k];
      double ta = a.tangent.dot(u[j]), tb = b.tangent.dot(u[j]);
      Hm(j, j) += (1 - ta * ta) / len[j] - a.kappa * u[j].dot(a.normal);
      Hm(k, k) += (1 - tb * tb) / len[j] + b.kappa * u[j].dot(b.normal);
      double mixed = -(a.tangent.dot(b.tangent) - ta * tb) / len[j];
      Hm(j, k) += mixed;
      Hm(k, j) += mixed;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Hm, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (!(sv[0] > 0)) throw DegenerateHessian("zero Hessian");
    // drop exact symmetry directions; fail when the gradient lives there
    Eigen::VectorXd rhs = svd.matrixU().transpose() * (-g);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
    double lost = 0.0;
    for (int i = 0; i < m; ++i) {
      if (sv[i] > 1e-9 * sv[0])
        y[i] = rhs[i] / sv[i];
      else
        lost = std::max(lost, std::abs(rhs[i]));
    }
    if (lost > 1e-6 * std::max(g.norm(), 1e-300) && lost > 1e-12)
      throw DegenerateHessian("Newton system singular, condition " + std::to_string(sv[0] / sv[m - 1]));
    Eigen::VectorXd delta = svd.matrixV() * y;
    double cap = 0.2 * L / m;
    double big = delta.lpNorm<Eigen::Infinity>();
    if (big > cap) delta *= cap / big;
    s += delta;
    evaluate();
    if (big < 1e-15) {
      ++it;
      break;
    }
  }
  out.iterations = it;
  out.residual = g.lpNorm<Eigen::Infinity>();
  if (!(out.residual < opt.tol))
    throw NoConvergence("periodic orbit Newton stopped after " + std::to_string(it) +
                        " iterations, residual " + std::to_string(out.residual));

  // total arclength advance must match the requested winding
  double advance = 0.0;
  for (int j = 0; j < m; ++j) advance += num::wrap(s[(j + 1) % m] - s[j], L);
  int turns = int(std::lround(advance / L));
  if (turns != winding)
    throw NoConvergence("converged to winding " + std::to_string(turns) + " instead of " +
                        std::to_string(winding));

  out.length = 0.0;
  for (int j = 0; j < m; ++j) {
    out.vertices.push_back(num::wrap(s[j], L));
    out.momenta.push_back(u[j].dot(fr[j].tangent));
    out.length += len[j];
  }
  auto seg = iterate(c, out.point(0), m);
  double err = 0.0;
  for (int j = 0; j <= m; ++j) {
    int k = j % m;
    err = std::max(err, std::abs(arc_delta(seg.points[j].s, out.vertices[k], L)));
    err = std::max(err, std::abs(seg.points[j].p - out.momenta[k]));
  }
  out.closure_error = err;
  if (!(err < 1e-9)) throw NoConvergence("billiard map closure error " + std::to_string(err));
  return out;
}

std::string to_string(OrbitType t) {
  switch (t) {
    case OrbitType::elliptic: return "elliptic";
    case OrbitType::hyperbolic: return "hyperbolic";
    default: return "parabolic";
  }
}

nlohmann::json OrbitReport::to_json() const {
  nlohmann::json ev = nlohmann::json::array();
  for (int i = 0; i < 2; ++i) ev.push_back({eigenvalues[i].real(), eigenvalues[i].imag()});
  nlohmann::json j = {{"monodromy", {{monodromy(0, 0), monodromy(0, 1)}, {monodromy(1, 0), monodromy(1, 1)}}},
                      {"trace", trace},
                      {"det", det},
                      {"det_residual", std::abs(det - 1.0)},
                      {"type", to_string(type)},
                      {"eigenvalues", ev},
                      {"resonance_order", order},
                      {"resonances", resonances}};
  if (type == OrbitType::elliptic) j["phi"] = phi;
  return j;
}

OrbitReport classify_monodromy(const Eigen::Matrix2d& M, int N, double angle_tol) {
  if (N < 0) throw InvalidArgument("resonance order must be non-negative");
  OrbitReport r;
  r.monodromy = M;
  r.trace = M.trace();
  r.det = M.determinant();
  r.order = N;
  Eigen::EigenSolver<Eigen::Matrix2d> es(M);
  r.eigenvalues = es.eigenvalues();
  const double band = 1e-12;
  if (std::abs(r.trace) < 2 - band) {
    r.type = OrbitType::elliptic;
    r.phi = std::acos(r.trace / 2);
  } else if (std::abs(r.trace) > 2 + band) {
    r.type = OrbitType::hyperbolic;
  } else {
    r.type = OrbitType::parabolic;
    r.phi = r.trace > 0 ? 0.0 : pi;
  }
  if (r.type != OrbitType::hyperbolic)
    for (int k = 1; k <= N; ++k)
      if (std::abs(num::wrap_pi(k * r.phi)) < angle_tol) r.resonances.push_back(k);
  return r;
}

OrbitReport classify(const BoundaryCurve& c, const PeriodicOrbit& orbit, int N) {
  Eigen::Matrix2d M = Eigen::Matrix2d::Identity();
  for (int j = 0; j < orbit.m; ++j) M = jacobian(c, orbit.point(j)) * M;
  return classify_monodromy(M, N);
}

PlaneMap return_map(const BoundaryCurve& c, const PeriodicOrbit& orbit) {
  PhasePoint z0 = orbit.point(0);
  int m = orbit.m;
  double L = c.perimeter();
  return [c, z0, m, L](const Eigen::Vector2d& xi) {
    PhasePoint z{z0.s + xi[0], z0.p + xi[1]};
    auto seg = iterate(c, z, m);
    const PhasePoint& e = seg.points.back();
    return Eigen::Vector2d(arc_delta(z0.s, e.s, L), e.p - z0.p);
  };
}

namespace {

// Truncated polynomial in (z, zbar).
struct CPoly {
  int D = 3;
  std::vector<cd> c;
  explicit CPoly(int d = 3) : D(d), c((d + 1) * (d + 1), 0.0) {}
  cd& at(int j, int k) { return c[j * (D + 1) + k]; }
  cd at(int j, int k) const { return c[j * (D + 1) + k]; }
};

CPoly operator+(const CPoly& a, const CPoly& b) {
  CPoly r(a.D);
  for (size_t i = 0; i < r.c.size(); ++i) r.c[i] = a.c[i] + b.c[i];
  return r;
}
CPoly operator*(cd s, const CPoly& a) {
  CPoly r(a.D);
  for (size_t i = 0; i < r.c.size(); ++i) r.c[i] = s * a.c[i];
  return r;
}
CPoly operator*(const CPoly& a, const CPoly& b) {
  CPoly r(a.D);
  const int D = a.D;
  for (int j1 = 0; j1 <= D; ++j1)
    for (int k1 = 0; j1 + k1 <= D; ++k1) {
      cd x = a.at(j1, k1);
      if (x == 0.0) continue;
      for (int j2 = 0; j1 + k1 + j2 <= D; ++j2)
        for (int k2 = 0; j1 + k1 + j2 + k2 <= D; ++k2) r.at(j1 + j2, k1 + k2) += x * b.at(j2, k2);
    }
  return r;
}
CPoly conj(const CPoly& a) {
  CPoly r(a.D);
  for (int j = 0; j <= a.D; ++j)
    for (int k = 0; j + k <= a.D; ++k) r.at(j, k) = std::conj(a.at(k, j));
  return r;
}
CPoly identity(int D) {
  CPoly r(D);
  r.at(1, 0) = 1.0;
  return r;
}
CPoly constant(int D, cd v) {
  CPoly r(D);
  r.at(0, 0) = v;
  return r;
}

// P(A, B) for A, B without constant terms.
CPoly compose(const CPoly& P, const CPoly& A, const CPoly& B) {
  const int D = P.D;
  std::vector<CPoly> pa(D + 1, CPoly(D)), pb(D + 1, CPoly(D));
  pa[0] = constant(D, 1.0);
  pb[0] = constant(D, 1.0);
  for (int i = 1; i <= D; ++i) {
    pa[i] = pa[i - 1] * A;
    pb[i] = pb[i - 1] * B;
  }
  CPoly r(D);
  for (int j = 0; j <= D; ++j)
    for (int k = 0; j + k <= D; ++k)
      if (P.at(j, k) != 0.0) r = r + P.at(j, k) * (pa[j] * pb[k]);
  return r;
}

struct Jet {
  // coefficient of xi1^a xi2^b for each component, a + b <= D
  std::vector<std::vector<double>> f[2];
  double condition = 0.0;
};

Jet fit_jet(const PlaneMap& F, const TwistOptions& opt) {
  const int deg = opt.fit_degree, n = opt.grid, D = opt.jet_order;
  std::vector<double> nodes(n);
  for (int i = 0; i < n; ++i) nodes[i] = std::cos(pi * (i + 0.5) / n);
  std::vector<std::pair<int, int>> mono;
  for (int t = 0; t <= deg; ++t)
    for (int a = t; a >= 0; --a) mono.push_back({a, t - a});
  Eigen::MatrixXd V(n * n, mono.size());
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k)
      for (size_t q = 0; q < mono.size(); ++q)
        V(i * n + k, q) = std::pow(nodes[i], mono[q].first) * std::pow(nodes[k], mono[q].second);
  Jet jet;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(V);
  const auto& sv = svd.singularValues();
  jet.condition = sv[0] / sv[sv.size() - 1];
  if (!(jet.condition < opt.cond_limit))
    throw JetIllConditioned("design matrix condition " + std::to_string(jet.condition));
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(V);

  auto fit_at = [&](double h) {
    Eigen::MatrixXd Y(n * n, 2);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) {
        Eigen::Vector2d v = F(Eigen::Vector2d(h * nodes[i], h * nodes[k]));
        if (!v.allFinite()) throw JetIllConditioned("map returned a non-finite value");
        Y.row(i * n + k) = v.transpose();
      }
    Eigen::MatrixXd C = qr.solve(Y);
    std::array<std::vector<std::vector<double>>, 2> out;
    for (int comp = 0; comp < 2; ++comp) {
      out[comp].assign(D + 1, std::vector<double>(D + 1, 0.0));
      for (size_t q = 0; q < mono.size(); ++q) {
        auto [a, b] = mono[q];
        if (a + b <= D) out[comp][a][b] = C(q, comp) / std::pow(h, a + b);
      }
    }
    return out;
  };
  auto c1 = fit_at(opt.jet_radius);
  if (opt.richardson) {
    auto c2 = fit_at(opt.jet_radius / 2);
    for (int comp = 0; comp < 2; ++comp)
      for (int a = 0; a <= D; ++a)
        for (int b = 0; a + b <= D; ++b) {
          double w = std::pow(2.0, deg + 1 - a - b);
          c1[comp][a][b] = (w * c2[comp][a][b] - c1[comp][a][b]) / (w - 1);
        }
  }
  jet.f[0] = c1[0];
  jet.f[1] = c1[1];
  return jet;
}

// Symplectic S with S^{-1} A S a rotation by phi (counterclockwise).
struct Normalizer {
  Eigen::Matrix2d S, Si;
  double phi = 0.0;
};

Normalizer normalizer(const Eigen::Matrix2d& A) {
  double tr = A.trace();
  if (!(std::abs(tr) < 2)) throw PreconditionViolation("fixed point is not elliptic, trace " + std::to_string(tr));
  double c = tr / 2, s = std::sqrt(1 - c * c);
  if (A(1, 0) < 0) s = -s;
  Eigen::Matrix2d JA = (A - c * Eigen::Matrix2d::Identity()) / s;
  double p = JA(0, 0), r = JA(1, 0);
  Normalizer n;
  n.phi = std::atan2(s, c);
  n.S << 1, p, 0, r;
  n.S /= std::sqrt(r);
  n.Si = n.S.inverse();
  return n;
}

std::vector<CircleSample> circle_route(const PlaneMap& F, const Normalizer& nz, const TwistOptions& opt) {
  std::vector<CircleSample> out;
  const int K = opt.fourier_modes;
  const double max_gap = two_pi / (16.0 * K);
  for (int ci = 1; ci <= opt.circles; ++ci) {
    double r0 = opt.circle_radius * ci / opt.circles;
    Eigen::Vector2d xi = nz.S * Eigen::Vector2d(r0, 0.0);
    std::vector<cd> z{{r0, 0.0}};
    int n = opt.circle_iterations;
    double rot = 0.0;
    for (;;) {
      while (int(z.size()) < n + 1) {
        xi = F(xi);
        Eigen::Vector2d eta = nz.Si * xi;
        z.push_back({eta[0], eta[1]});
      }
      auto w = num::birkhoff_weights(n);
      rot = 0.0;
      for (int k = 0; k < n; ++k) rot += w[k] * (nz.phi + num::wrap_pi(std::arg(z[k + 1] / z[k]) - nz.phi));
      // near a low order resonance the phases k rot fill the circle slowly
      std::vector<double> ph(n + 1);
      for (int k = 0; k <= n; ++k) ph[k] = num::wrap(k * rot, two_pi);
      std::sort(ph.begin(), ph.end());
      double gap = ph.front() + two_pi - ph.back();
      for (int k = 0; k < n; ++k) gap = std::max(gap, ph[k + 1] - ph[k]);
      if (gap < max_gap || n >= opt.circle_max_iterations) break;
      n *= 2;
    }
    // least squares Fourier fit of the orbit in theta_k = k rot
    const int nc = 2 * K + 1;
    Eigen::MatrixXcd A(n + 1, nc);
    Eigen::VectorXcd b(n + 1);
    for (int k = 0; k <= n; ++k) {
      for (int q = -K; q <= K; ++q) A(k, q + K) = std::polar(1.0, q * k * rot);
      b[k] = z[k];
    }
    Eigen::VectorXcd a = A.colPivHouseholderQr().solve(b);
    double action = 0.0;
    for (int q = -K; q <= K; ++q) action += 0.5 * q * std::norm(a[q + K]);
    out.push_back({action, rot, n});
  }
  return out;
}

}  // namespace

nlohmann::json BnfReport::to_json() const {
  nlohmann::json s = nlohmann::json::array();
  for (auto& c : samples) s.push_back({{"action", c.action}, {"rotation", c.rotation}, {"iterations", c.iterations}});
  return {{"phi", phi},
          {"tau1", tau1_jet},
          {"tau1_jet", tau1_jet},
          {"tau1_circles", tau1_circles},
          {"tau2_circles", tau2_circles},
          {"cross_residual", cross_residual},
          {"cross_tolerance", cross_tolerance},
          {"area_defect", area_defect},
          {"condition", condition},
          {"inactive_resonances", inactive_resonances},
          {"methods", {jet_method, circle_method}},
          {"circles", s},
          {"verdict", twisted ? "twisted" : "untwisted"}};
}

BnfReport twist_of_map(const PlaneMap& F, const TwistOptions& opt) {
  if (opt.jet_order < 3 || opt.jet_order > 4) throw InvalidArgument("jet order must be 3 or 4");
  if (opt.fit_degree < opt.jet_order + 1) throw InvalidArgument("fit degree must exceed the jet order");
  if ((opt.fit_degree + 1) * (opt.fit_degree + 2) / 2 > opt.grid * opt.grid)
    throw InvalidArgument("grid too small for the fit degree");
  if (opt.circles < opt.circle_fit_degree + 2) throw InvalidArgument("too few circles for the fit degree");
  const int D = opt.jet_order;
  Jet jet = fit_jet(F, opt);
  Eigen::Matrix2d A;
  A << jet.f[0][1][0], jet.f[0][0][1], jet.f[1][1][0], jet.f[1][0][1];
  Normalizer nz = normalizer(A);
  const cd lam = std::polar(1.0, nz.phi);

  for (int k = 1; k <= 2; ++k)
    if (std::abs(num::wrap_pi(k * nz.phi)) < 1e-9)
      throw ResonantOrbit("eigenphase resonant of order " + std::to_string(k));

  // map in z = eta1 + i eta2 with xi = S eta
  const cd I(0, 1);
  CPoly x(D), y(D);
  x.at(1, 0) = 0.5;
  x.at(0, 1) = 0.5;
  y.at(1, 0) = -0.5 * I;
  y.at(0, 1) = 0.5 * I;
  CPoly xi1 = nz.S(0, 0) * x + nz.S(0, 1) * y;
  CPoly xi2 = nz.S(1, 0) * x + nz.S(1, 1) * y;
  CPoly Fc[2] = {CPoly(D), CPoly(D)};
  {
    std::vector<CPoly> p1(D + 1, CPoly(D)), p2(D + 1, CPoly(D));
    p1[0] = constant(D, 1.0);
    p2[0] = constant(D, 1.0);
    for (int i = 1; i <= D; ++i) {
      p1[i] = p1[i - 1] * xi1;
      p2[i] = p2[i - 1] * xi2;
    }
    for (int comp = 0; comp < 2; ++comp)
      for (int a = 0; a <= D; ++a)
        for (int b = 0; a + b <= D; ++b)
          if (a + b >= 1) Fc[comp] = Fc[comp] + cd(jet.f[comp][a][b]) * (p1[a] * p2[b]);
  }
  CPoly e1 = cd(nz.Si(0, 0)) * Fc[0] + cd(nz.Si(0, 1)) * Fc[1];
  CPoly e2 = cd(nz.Si(1, 0)) * Fc[0] + cd(nz.Si(1, 1)) * Fc[1];
  CPoly G = e1 + I * e2;

  BnfReport rep;
  rep.phi = nz.phi;
  rep.condition = jet.condition;

  // remove quadratic terms
  CPoly h(D);
  for (int j = 0; j <= 2; ++j) {
    int k = 2 - j;
    cd g = G.at(j, k);
    cd div = std::pow(lam, j) * std::pow(std::conj(lam), k) - lam;
    if (std::abs(div) < 1e-6) {
      if (std::abs(g) > opt.resonance_tol)
        throw ResonantOrbit("quadratic term z^" + std::to_string(j) + " zbar^" + std::to_string(k) +
                            " is resonant with coefficient " + std::to_string(std::abs(g)));
      rep.inactive_resonances.push_back(3);
      continue;
    }
    h.at(j, k) = g / div;
  }
  CPoly Phi = identity(D) + h;
  CPoly T = compose(G, Phi, conj(Phi));
  CPoly inv = identity(D);
  for (int it = 0; it < D; ++it) inv = identity(D) + cd(-1.0) * compose(h, inv, conj(inv));
  CPoly Gn = compose(inv, T, conj(T));

  // cubic resonance at order 4: zbar^3 survives
  if (std::abs(num::wrap_pi(4 * nz.phi)) < 1e-9) {
    if (std::abs(Gn.at(0, 3)) > opt.resonance_tol)
      throw ResonantOrbit("cubic term zbar^3 is resonant with coefficient " + std::to_string(std::abs(Gn.at(0, 3))));
    rep.inactive_resonances.push_back(4);
  }
  cd cc = Gn.at(2, 1) / lam;
  rep.tau1_jet = 2 * cc.imag();
  rep.area_defect = cc.real();

  rep.samples = circle_route(F, nz, opt);
  std::vector<double> act, rot;
  for (auto& s : rep.samples) {
    act.push_back(s.action);
    rot.push_back(s.rotation);
  }
  auto fit = num::polyfit(act, rot, opt.circle_fit_degree);
  rep.tau1_circles = fit.coef[1];
  rep.tau2_circles = fit.coef[2];
  rep.cross_residual = std::abs(rep.tau1_jet - rep.tau1_circles);
  rep.cross_tolerance = 1e-6 + 1e-4 * std::abs(rep.tau1_jet) + 3 * std::sqrt(std::max(0.0, fit.cov(1, 1)));
  rep.twisted = std::abs(rep.tau1_jet) > 1e-6;
  return rep;
}

BnfReport twist_at_elliptic(const BoundaryCurve& c, const PeriodicOrbit& orbit, const TwistOptions& opt) {
  auto cls = classify(c, orbit, 4);
  if (cls.type == OrbitType::parabolic)
    throw ResonantOrbit("parabolic orbit, eigenvalue 1 is resonant of order 1");
  if (cls.type != OrbitType::elliptic) throw PreconditionViolation("orbit is " + to_string(cls.type));
  return twist_of_map(return_map(c, orbit), opt);
}

}  // namespace bk::orbits
