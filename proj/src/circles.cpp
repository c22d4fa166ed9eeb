#include "bkam/circles.hpp"

#include <cmath>
#include <ostream>
#include <random>

#include "bkam/errors.hpp"
#include "bkam/numerics.hpp"

namespace bk::circles {

using num::pi;
using num::two_pi;
using cd = std::complex<double>;

void DiophantineSpec::validate() const {
  if (!(kappa > 0 && kappa < 1)) throw InvalidArgument("kappa must lie in (0, 1)");
  if (!(tau > 1)) throw InvalidArgument("tau must exceed 1");
  if (kmax < 1) throw InvalidArgument("Kmax must be at least 1");
}

DiophantineVerdict is_diophantine(double omega, const DiophantineSpec& spec) {
  spec.validate();
  DiophantineVerdict v;
  v.worst_margin = INFINITY;
  for (int k = 1; k <= spec.kmax; ++k) {
    double d = std::abs(num::wrap_pi(k * omega));
    double margin = d - spec.kappa / std::pow(double(k), spec.tau);
    if (margin < v.worst_margin) {
      v.worst_margin = margin;
      v.worst_k = k;
    }
    if (margin < 0 && v.first_violation == 0) {
      v.first_violation = k;
      v.accepted = false;
    }
  }
  return v;
}

double measure_omega_kappa(double lo, double hi, const DiophantineSpec& spec, int samples, std::uint64_t seed) {
  spec.validate();
  if (samples < 1000) throw PreconditionViolation("at least 1000 samples are required");
  if (!(hi > lo)) throw InvalidArgument("empty frequency interval");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(lo, hi);
  std::vector<double> bound(spec.kmax + 1);
  for (int k = 1; k <= spec.kmax; ++k) bound[k] = spec.kappa / std::pow(double(k), spec.tau);
  int bad = 0;
  for (int i = 0; i < samples; ++i) {
    double w = U(rng);
    for (int k = 1; k <= spec.kmax; ++k)
      if (std::abs(num::wrap_pi(k * w)) < bound[k]) {
        ++bad;
        break;
      }
  }
  return double(bad) / samples;
}

namespace {

double average(const std::vector<double>& x, int n, Scheme scheme) {
  if (scheme == Scheme::plain) {
    double s = 0;
    for (int i = 0; i < n; ++i) s += x[i];
    return s / n;
  }
  auto w = num::birkhoff_weights(n);
  double s = 0;
  for (int i = 0; i < n; ++i) s += w[i] * x[i];
  return s;
}

}  // namespace

RotationEstimate rotation_number(const BoundaryCurve& c, const PhasePoint& start, int iterations, Scheme scheme) {
  if (iterations < 2) throw InvalidArgument("need at least two iterations");
  const double L = c.perimeter();
  std::vector<double> ds(iterations);
  PhasePoint z = start;
  double th = NAN;
  for (int i = 0; i < iterations; ++i) {
    StepResult r = step_full(c, z, th);
    ds[i] = num::wrap(r.next.s - z.s, L);
    z = r.next;
    th = r.theta_next;
  }
  RotationEstimate e;
  e.omega = two_pi / L * average(ds, iterations, scheme);
  e.error = std::abs(e.omega - two_pi / L * average(ds, iterations / 2, scheme));
  return e;
}

double birkhoff_beta(const BoundaryCurve& c, const PhasePoint& start, int iterations) {
  std::vector<double> g(iterations);
  PhasePoint z = start;
  double th = NAN;
  for (int i = 0; i < iterations; ++i) {
    StepResult r = step_full(c, z, th);
    g[i] = -r.chord;
    z = r.next;
    th = r.theta_next;
  }
  return average(g, iterations, Scheme::weighted);
}

PhasePoint InvariantCircleRecord::at(double theta) const {
  double uu = u[0].real(), vv = v[0].real();
  for (size_t k = 1; k < u.size(); ++k) {
    cd e = std::polar(1.0, k * theta);
    uu += 2 * (u[k] * e).real();
    vv += 2 * (v[k] * e).real();
  }
  return {theta * perimeter / two_pi + uu, vv};
}

nlohmann::json InvariantCircleRecord::to_json() const {
  auto pack = [](const std::vector<cd>& a) {
    nlohmann::json j = nlohmann::json::array();
    for (auto& x : a) j.push_back({x.real(), x.imag()});
    return j;
  };
  return {{"omega", omega},       {"perimeter", perimeter}, {"modes", modes},       {"u", pack(u)},
          {"v", pack(v)},         {"residual", residual},   {"beta", beta},         {"I", action},
          {"iterations", iterations}, {"residual_history", history}};
}

InvariantCircleRecord InvariantCircleRecord::from_json(const nlohmann::json& j) {
  InvariantCircleRecord r;
  r.omega = j.at("omega").get<double>();
  r.perimeter = j.at("perimeter").get<double>();
  r.modes = j.at("modes").get<int>();
  for (auto& x : j.at("u")) r.u.push_back({x[0].get<double>(), x[1].get<double>()});
  for (auto& x : j.at("v")) r.v.push_back({x[0].get<double>(), x[1].get<double>()});
  r.residual = j.value("residual", 0.0);
  r.beta = j.value("beta", 0.0);
  r.action = j.value("I", 0.0);
  r.iterations = j.value("iterations", 0);
  if (r.u.size() != r.v.size() || r.u.empty()) throw InvalidArgument("circle record coefficient lists disagree");
  return r;
}

namespace {

// Values of the conjugacy on an n-grid shifted by delta.
void sample(const InvariantCircleRecord& r, int n, double delta, std::vector<double>& s, std::vector<double>& p) {
  s = num::eval_fourier(r.u, n, delta);
  p = num::eval_fourier(r.v, n, delta);
  for (int j = 0; j < n; ++j) s[j] += (two_pi * j / n + delta) * r.perimeter / two_pi;
}

void finish(const BoundaryCurve& c, InvariantCircleRecord& r, int n) {
  const double L = r.perimeter;
  std::vector<double> s0, p0, s1, p1;
  sample(r, n, 0.0, s0, p0);
  sample(r, n, r.omega, s1, p1);
  double chord = 0.0;
  for (int j = 0; j < n; ++j) chord += (c.frame(s1[j]).pos - c.frame(s0[j]).pos).norm();
  r.beta = -chord / n;
  std::vector<cd> du(r.u.size());
  for (size_t k = 0; k < du.size(); ++k) du[k] = cd(0, double(k)) * r.u[k];
  auto up = num::eval_fourier(du, n);
  double acc = 0.0;
  for (int j = 0; j < n; ++j) acc += p0[j] * (L / two_pi + up[j]);
  r.action = -acc / n;
}

}  // namespace

double conjugacy_residual(const BoundaryCurve& c, const InvariantCircleRecord& r, int n) {
  const double L = r.perimeter;
  const double off = pi / n;
  std::vector<double> s0, p0, s1, p1;
  sample(r, n, off, s0, p0);
  sample(r, n, off + r.omega, s1, p1);
  double worst = 0.0;
  for (int j = 0; j < n; ++j) {
    PhasePoint b = step(c, {s0[j], p0[j]});
    worst = std::max(worst, std::abs(arc_delta(s1[j], b.s, L)));
    worst = std::max(worst, std::abs(b.p - p1[j]));
  }
  return worst;
}

InvariantCircleRecord find_circle(const BoundaryCurve& c, double omega, const CircleSeed& seed,
                                  const CircleOptions& opt) {
  if (!(omega > 0 && omega < two_pi)) throw InvalidArgument("omega must lie in (0, 2 pi)");
  if (opt.modes < 16) throw InvalidArgument("at least 16 modes are required");
  auto verdict = is_diophantine(omega, opt.spec);
  if (!verdict.accepted)
    throw PreconditionViolation("omega fails the Diophantine condition at k = " +
                                std::to_string(verdict.first_violation));
  // divisors beyond Kmax that the collocation grid still resolves
  for (int k = opt.spec.kmax + 1; k <= opt.modes; ++k) {
    double d = std::abs(std::polar(1.0, k * omega) - 1.0);
    if (d < opt.spec.kappa / std::pow(double(k), opt.spec.tau))
      throw SmallDivisorBlowup("divisor |e^{ik omega} - 1| = " + std::to_string(d) + " at k = " + std::to_string(k));
  }
  const double L = c.perimeter();
  const int M = opt.modes, N = 2 * M + 1;
  std::vector<double> U(N), V(N);

  if (seed.from) {
    InvariantCircleRecord prev = *seed.from;
    if (std::abs(prev.perimeter - L) > 1e-9 * L) throw InvalidArgument("seed record belongs to another curve");
    U = num::eval_fourier(prev.u, N);
    V = num::eval_fourier(prev.v, N);
  } else {
    double p;
    if (seed.p0) {
      p = *seed.p0;
    } else {
      double lo = seed.p_lo, hi = seed.p_hi;
      for (int it = 0; it < 45; ++it) {
        double mid = 0.5 * (lo + hi);
        double w = rotation_number(c, {seed.s0, mid}, opt.seed_iterations).omega;
        if (w > omega)
          lo = mid;
        else
          hi = mid;
      }
      p = 0.5 * (lo + hi);
    }
    // Fourier fit of the seed orbit in phi_n = n omega
    const int n = 4 * N;
    Eigen::MatrixXd A(n, N);
    Eigen::MatrixXd Y(n, 2);
    PhasePoint z{seed.s0, p};
    double lift = seed.s0, th = NAN;
    for (int i = 0; i < n; ++i) {
      double ph = i * omega;
      A(i, 0) = 1.0;
      for (int k = 1; k <= M; ++k) {
        A(i, 2 * k - 1) = std::cos(k * ph);
        A(i, 2 * k) = std::sin(k * ph);
      }
      Y(i, 0) = lift - ph * L / two_pi;
      Y(i, 1) = z.p;
      StepResult r = step_full(c, z, th);
      lift += num::wrap(r.next.s - z.s, L);
      z = r.next;
      th = r.theta_next;
    }
    Eigen::MatrixXd C = A.colPivHouseholderQr().solve(Y);
    const double a0 = C(0, 0), th0 = two_pi * a0 / L;
    for (int j = 0; j < N; ++j) {
      double ph = two_pi * j / N - th0;
      double x = C(0, 0), y = C(0, 1);
      for (int k = 1; k <= M; ++k) {
        x += C(2 * k - 1, 0) * std::cos(k * ph) + C(2 * k, 0) * std::sin(k * ph);
        y += C(2 * k - 1, 1) * std::cos(k * ph) + C(2 * k, 1) * std::sin(k * ph);
      }
      U[j] = x - a0;
      V[j] = y;
    }
  }

  // shift by omega on the collocation grid, trigonometric interpolation
  Eigen::MatrixXd T(N, N);
  for (int j = 0; j < N; ++j)
    for (int k = 0; k < N; ++k) {
      double x = two_pi * (j - k) / N + omega;
      double acc = 1.0;
      for (int m = 1; m <= M; ++m) acc += 2 * std::cos(m * x);
      T(j, k) = acc / N;
    }

  InvariantCircleRecord rec;
  rec.omega = omega;
  rec.perimeter = L;
  rec.modes = M;
  Eigen::VectorXd E(2 * N + 1);
  Eigen::MatrixXd Jm(2 * N + 1, 2 * N);
  auto residual = [&](bool with_jac) {
    Eigen::Map<Eigen::VectorXd> u(U.data(), N), v(V.data(), N);
    Eigen::VectorXd Tu = T * u, Tv = T * v;
    if (with_jac) Jm.setZero();
    for (int j = 0; j < N; ++j) {
      double s = two_pi * j / N * L / two_pi + U[j];
      PhasePoint z{s, V[j]};
      StepResult r = step_full(c, z);
      double ds = num::wrap(r.next.s - s, L);
      E[j] = U[j] + ds - omega * L / two_pi - Tu[j];
      E[N + j] = r.next.p - Tv[j];
      if (with_jac) {
        Eigen::Matrix2d D = jacobian(c, z);
        Jm(j, j) += D(0, 0);
        Jm(j, N + j) += D(0, 1);
        Jm(N + j, j) += D(1, 0);
        Jm(N + j, N + j) += D(1, 1);
      }
    }
    double mean = 0;
    for (int j = 0; j < N; ++j) mean += U[j];
    E[2 * N] = mean / N;
    if (with_jac) {
      Jm.block(0, 0, N, N) -= T;
      Jm.block(N, N, N, N) -= T;
      Jm.row(2 * N).head(N).setConstant(1.0 / N);
    }
    return E.lpNorm<Eigen::Infinity>();
  };

  double res = residual(true);
  rec.history.push_back(res);
  int it = 0;
  while (res > 1e-13 && it < opt.max_iter) {
    Eigen::VectorXd d = Jm.colPivHouseholderQr().solve(-E);
    if (!d.allFinite()) throw NoConvergence("linear solve failed");
    double big = d.lpNorm<Eigen::Infinity>();
    double cap = 0.05 * L;
    if (big > cap) d *= cap / big;
    for (int j = 0; j < N; ++j) {
      U[j] += d[j];
      V[j] += d[N + j];
    }
    ++it;
    double prev = res;
    res = residual(true);
    rec.history.push_back(res);
    if (big < 1e-15 || (res > 0.5 * prev && res < opt.tol * 1e-2)) break;
  }
  rec.iterations = it;
  auto cu = num::real_fourier(U), cv = num::real_fourier(V);
  rec.u.assign(cu.begin(), cu.begin() + M + 1);
  rec.v.assign(cv.begin(), cv.begin() + M + 1);
  rec.u[0] = 0.0;
  rec.residual = conjugacy_residual(c, rec, opt.test_angles);
  if (!(rec.residual < opt.tol)) {
    std::string hist;
    for (double h : rec.history) hist += " " + std::to_string(h);
    throw NoConvergence("conjugacy residual " + std::to_string(rec.residual) + ", history:" + hist);
  }
  finish(c, rec, opt.test_angles);
  return rec;
}

nlohmann::json IdentityReport::to_json() const {
  return {{"omega", omega},   {"h", h},           {"dbeta_domega", dbeta_domega}, {"I", action},
          {"residual", residual}, {"dL_dI", dL_dI}, {"legendre_residual", legendre_residual}};
}

IdentityReport bnf_identity_residual(std::vector<InvariantCircleRecord> records) {
  if (records.size() < 3) throw PreconditionViolation("need at least three circle records");
  std::sort(records.begin(), records.end(), [](auto& a, auto& b) { return a.omega < b.omega; });
  size_t m = records.size() / 2;
  const auto &a = records[m - 1], &b = records[m], &c = records[m + 1];
  double h1 = b.omega - a.omega, h2 = c.omega - b.omega;
  if (!(h1 > 1e-10) || !(h2 > 1e-10)) throw SpacingTooCoarse("frequencies must be distinct");
  if (h1 > 0.2 || h2 > 0.2) throw SpacingTooCoarse("frequency spacing above 0.2 rad");
  IdentityReport r;
  r.omega = b.omega;
  r.h = std::max(h1, h2);
  // three point derivative on a possibly uneven stencil
  r.dbeta_domega = -h2 / (h1 * (h1 + h2)) * a.beta + (h2 - h1) / (h1 * h2) * b.beta + h1 / (h2 * (h1 + h2)) * c.beta;
  r.action = b.action;
  r.residual = std::abs(r.dbeta_domega - r.action);
  auto Lg = [](const InvariantCircleRecord& x) { return x.omega * x.action - x.beta; };
  double dI = c.action - a.action;
  if (std::abs(dI) > 0) {
    r.dL_dI = (Lg(c) - Lg(a)) / dI;
    r.legendre_residual = std::abs(r.dL_dI - r.omega);
  }
  return r;
}

void write_table_csv(std::ostream& os, const std::vector<InvariantCircleRecord>& records) {
  os << "omega,beta,I,residual\n";
  os.precision(17);
  for (auto& r : records) os << r.omega << ',' << r.beta << ',' << r.action << ',' << r.residual << '\n';
}

}  // namespace bk::circles
