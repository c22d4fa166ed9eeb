#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "bkam/circles.hpp"
#include "bkam/errors.hpp"
#include "bkam/numerics.hpp"
#include "bkam/quantize.hpp"
#include "doctest.h"

using namespace bk;
using namespace bk::quantize;

namespace {
const double golden = (1 + std::sqrt(5.0)) / 2;

// Taylor coefficients of the disk beta(omega) = -2 sin(omega/2) at w0.
ActionModel disk_model(double w0, int order = 24) {
  std::vector<double> b;
  double fact = 1.0;
  for (int m = 0; m <= order; ++m) {
    if (m) fact *= m;
    double s = std::sin(w0 / 2), c = std::cos(w0 / 2);
    double d[4] = {s, c, -s, -c};
    b.push_back(-2 * d[m % 4] * std::pow(0.5, m) / fact);
  }
  return model_from_series(w0, b);
}

Maslov zero_maslov() {
  Maslov m;
  m.theta0 = 0;
  m.theta = 0;
  return m;
}
}  // namespace

TEST_CASE("Maslov targets and the sign switch") {
  Maslov m;  // (1, 3)
  CHECK(first_target(4, m) == doctest::Approx(4.25));
  CHECK(second_target(2, m) == doctest::Approx(2 * M_PI * 2.75).epsilon(1e-15));
  m.alt_sign = true;
  CHECK(second_target(2, m) == doctest::Approx(4 * M_PI - 1.5 * M_PI).epsilon(1e-15));
  auto z = zero_maslov();
  z.alt_sign = true;
  CHECK(second_target(5, z) == second_target(5, zero_maslov()));
}

TEST_CASE("strong search on a commensurate line") {
  SearchOptions o;
  o.maslov = zero_maslov();
  CHECK_THROWS_AS(strong_search(1.0, 2 * M_PI, 20, 1e-9, o), PeriodicLine);
  CHECK_THROWS_AS(strong_search(1.0, 2 * M_PI * 3 / 5, 20, 1e-9, o), PeriodicLine);
  o.check_periodic = false;
  auto hits = strong_search(1.0, 2 * M_PI, 20, 1e-9, o);
  REQUIRE(hits.size() == 20);
  for (std::size_t i = 0; i < hits.size(); ++i) {
    CHECK(hits[i].k == long(i + 1));
    CHECK(hits[i].kn == long(i + 1));
    CHECK(hits[i].mu0 == doctest::Approx(double(i + 1)).epsilon(1e-15));
    CHECK(hits[i].distance < 1e-12);
  }
}

TEST_CASE("tol = 0 gives no hits") {
  CHECK(strong_search(1.0, 2 * M_PI * golden, 1000, 0.0).empty());
  SearchOptions o;
  o.check_periodic = false;
  CHECK(strong_search(1.0, 2 * M_PI, 50, 0.0, o).empty());
  CHECK_THROWS_AS(strong_search(0.0, 1.0, 10, 0.1), InvalidArgument);
  CHECK_THROWS_AS(strong_search(1.0, 1.0, 0.5, 0.1), InvalidArgument);
}

TEST_CASE("golden line hits against a brute scan") {
  SearchOptions o;
  o.maslov = zero_maslov();
  const double tol = 0.05;
  auto hits = strong_search(1.0, 2 * M_PI * golden, 1000, tol, o);
  CHECK(hits.size() >= 5);
  // distance of the lattice point (k, kn) to the line t (1, golden)
  std::set<std::pair<long, long>> expect;
  for (long k = 1; k <= 1000; ++k) {
    for (long kn = 0; kn <= 1700; ++kn) {
      double d = std::abs(k * golden - kn) / std::sqrt(1 + golden * golden);
      double mu = (k + kn * golden) / (1 + golden * golden);
      if (d < tol && mu >= 1 && mu <= 1000) expect.insert({k, kn});
    }
  }
  std::set<std::pair<long, long>> got;
  for (auto& h : hits) got.insert({h.k, h.kn});
  CHECK(got == expect);
  for (std::size_t i = 1; i < hits.size(); ++i) CHECK(hits[i].mu0 > hits[i - 1].mu0);
  // record distances fall along the scan, and the records are Fibonacci pairs
  double best = 1.0;
  int records = 0;
  for (auto& h : hits) {
    if (h.distance < best) {
      best = h.distance;
      ++records;
      CHECK(std::abs(h.kn * h.kn - h.kn * h.k - h.k * h.k) == 1);
    }
  }
  CHECK(records >= 5);
}

TEST_CASE("search hits satisfy both conditions with negative action") {
  const double I = -1.2467, L = 0.3711;
  Maslov m;
  SearchOptions o;
  o.maslov = m;
  auto hits = strong_search(I, L, 2000, 0.2, o);
  REQUIRE(!hits.empty());
  for (auto& h : hits) {
    CHECK(h.k < 0);
    double a = h.mu0 * I - first_target(int(h.k), m);
    double b = (h.mu0 * L - second_target(int(h.kn), m)) / (2 * M_PI);
    CHECK(std::hypot(a, b) == doctest::Approx(h.distance).epsilon(1e-9));
    CHECK(h.distance < 0.2);
    // mu0 is the stationary point of the distance along the line
    CHECK(std::abs(a * I + b * L / (2 * M_PI)) < 1e-9 * h.mu0);
  }
  auto near = nearest_seed(I, L, 500.0, m);
  CHECK(std::abs(near.mu0 - 500.0) < 2.0);
  auto ms = matched_seed(I, L, 500.0, 0.1, m);
  CHECK(ms.mu0 >= 500.0);
  CHECK(ms.mu0 <= 625.0);
  CHECK(std::abs(signed_offset(ms, I, m) - 0.1) < 0.05);
}

TEST_CASE("action model from a series reproduces the disk") {
  const double w0 = 2 * M_PI / (golden * golden * golden);
  auto d = disk_model(w0);
  CHECK(d.I0() == doctest::Approx(-std::cos(w0 / 2)).epsilon(1e-14));
  CHECK(d.D() == doctest::Approx(2 * std::sin(w0 / 2)).epsilon(1e-14));
  // L(I) = 2 arccos(-I) I + 2 sqrt(1 - I^2)
  auto Lc = [](double I) { return 2 * std::acos(-I) * I + 2 * std::sqrt(1 - I * I); };
  for (double x : {-0.02, -0.005, 0.0, 0.01, 0.03}) {
    double I = d.I0() + x;
    CHECK(d.L(I) == doctest::Approx(Lc(I)).epsilon(1e-13));
  }
  auto t = d.L_taylor(3);
  double I = d.I0(), s = std::sqrt(1 - I * I);
  CHECK(t[0] == doctest::Approx(Lc(I)).epsilon(1e-14));
  CHECK(t[1] == doctest::Approx(w0).epsilon(1e-14));
  CHECK(t[2] == doctest::Approx(1 / s).epsilon(1e-12));             // L''/2 = 1/sqrt(1 - I^2)
  CHECK(t[3] == doctest::Approx(I / (3 * s * s * s)).epsilon(1e-11));  // L'''/6
  CHECK_THROWS_AS(model_from_series(1.0, {1.0, 2.0}), InvalidArgument);
}

TEST_CASE("seed on the quantization line is a fixed point") {
  // I0 = 0.5, L0 = 0.6 pi, omega0 = 1: k = 5, kn = 3 at mu0 = 10 with zero Maslov shifts
  const double w0 = 1.0;
  auto model = model_from_series(w0, {w0 * 0.5 - 0.6 * M_PI, 0.5, 0.3, -0.1});
  CHECK(model.L0() == doctest::Approx(0.6 * M_PI));
  Hit seed{5, 3, 10.0, 0.0};
  QuasiOptions o;
  o.maslov = zero_maslov();
  o.M = 3;
  auto r = quasi_eigen(seed, model, o);
  for (double c : r.c) CHECK(c == 0.0);
  for (double b : r.b) CHECK(b == 0.0);
  CHECK(r.mu == 10.0);
  CHECK(r.second_residual < 1e-13);
}

TEST_CASE("determinant and seed guards") {
  auto bad = model_from_series(1.0, {0.2, -0.5, 0.3});  // D = -0.2
  QuasiOptions o;
  Hit seed{-5, 1, 10.0, 0.0};
  CHECK_THROWS_AS(quasi_eigen(seed, bad, o), DegenerateDeterminant);
  auto flat = model_from_series(1.0, {-1e-13, -0.5, 0.3});
  CHECK_THROWS_AS(quasi_eigen(seed, flat, o), DegenerateDeterminant);
  auto good = disk_model(1.0);
  Hit far{100, 0, 10.0, 0.0};
  CHECK_THROWS_AS(quasi_eigen(far, good, o), PreconditionViolation);
  Hit small{0, 0, 0.5, 0.0};
  CHECK_THROWS_AS(quasi_eigen(small, good, o), InvalidArgument);
}

TEST_CASE("every order solves the 2x2 system") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int trial = 0; trial < 200; ++trial) {
    double w0 = 0.5 + 2 * std::abs(U(rng));
    std::vector<double> beta{-(0.5 + std::abs(U(rng))), U(rng), 0.2 + 0.3 * std::abs(U(rng)), 0.1 * U(rng),
                             0.05 * U(rng)};
    auto model = model_from_series(w0, beta);
    Maslov m;
    m.theta0 = int(4 * U(rng));
    m.theta = int(4 * U(rng));
    m.alt_sign = U(rng) > 0;
    auto seed = nearest_seed(model.I0(), model.L0(), 40 + 400 * std::abs(U(rng)), m);
    QuasiOptions o;
    o.maslov = m;
    o.M = trial % 4;
    auto r = quasi_eigen(seed, model, o);
    Eigen::Matrix2d A;
    A << r.I, 1.0, r.L, r.omega;
    for (int j = 0; j <= r.M; ++j) {
      Eigen::Vector2d x = A.inverse() * Eigen::Vector2d(r.W[j], r.V[j]);
      double scale = 1 + std::abs(x(0)) + std::abs(x(1));
      CHECK(std::abs(x(0) - r.c[j]) < 1e-12 * scale);
      CHECK(std::abs(x(1) - r.b[j]) < 1e-12 * scale);
    }
    // order 0: elimination c0 = (V0 - omega W0)/(L - omega I)
    double W0 = first_target(int(r.k), m) - r.mu0 * r.I;
    double V0 = second_target(int(r.kn), m) - r.mu0 * r.L;
    CHECK(r.c[0] == doctest::Approx((V0 - r.omega * W0) / (r.L - r.omega * r.I)).epsilon(1e-12));
    CHECK(r.b[0] == doctest::Approx(W0 - r.c[0] * r.I).epsilon(1e-12));
  }
}

TEST_CASE("residual checks") {
  const double w0 = 2 * M_PI / (golden * golden * golden);
  auto d = disk_model(w0);
  Maslov m;
  for (double lam : {80.0, 300.0, 1200.0}) {
    auto seed = matched_seed(d.I0(), d.L0(), lam, 0.2, m);
    QuasiOptions o;
    o.M = 2;
    auto r2 = quasi_eigen(seed, d, o);
    auto res = residual_check(r2, d);
    CHECK(res.first < 1e-14);
    CHECK(res.series < 1e-12);
    o.M = 1;
    auto r1 = quasi_eigen(seed, d, o);
    CHECK(r2.second_residual < r1.second_residual);
    // dropping order M + 1 leaves D |c_{M+1}| eps^{M+1} in the second equation
    o.M = 3;
    auto r3 = quasi_eigen(seed, d, o);
    double predicted = d.D() * std::abs(r3.c[3]) * std::pow(r3.eps, 3);
    CHECK(r2.second_residual == doctest::Approx(predicted).epsilon(lam > 100 ? 0.05 : 0.2));
    // d/dmu [mu L((k + theta0/4)/mu)] = L(zeta) - zeta L'(zeta) = D(zeta)
    auto bumped = r2;
    bumped.c[0] += 1e-3;
    bumped.mu += 1e-3;
    auto rb = residual_check(bumped, d);
    CHECK(rb.second > r2.second_residual);
    CHECK(std::abs(rb.second - r2.second_residual) == doctest::Approx(d.D() * 1e-3).epsilon(0.02));
  }
}

TEST_CASE("Maslov sign switch changes the order-0 data only through V0") {
  auto d = disk_model(1.3);
  Maslov a, b;
  b.alt_sign = true;
  auto seed = nearest_seed(d.I0(), d.L0(), 200.0, a);
  QuasiOptions oa, ob;
  oa.maslov = a;
  ob.maslov = b;
  auto ra = quasi_eigen(seed, d, oa);
  auto rb = quasi_eigen(seed, d, ob);
  CHECK(ra.W[0] == rb.W[0]);
  CHECK(ra.V[0] - rb.V[0] == doctest::Approx(M_PI * a.theta).epsilon(1e-12));
  CHECK(ra.mu != rb.mu);
}

TEST_CASE("ellipse caustic data: determinant and residual scaling") {
  const double w0 = 2 * M_PI / (golden * golden * golden);
  auto e = BoundaryCurve::ellipse(2, 1);
  auto model = model_from_circles(e, w0);
  CHECK(model.fit_rms < 1e-10);
  auto rec = circles::find_circle(e, w0);
  CHECK(std::abs(model.D() - (-rec.beta)) < 1e-8);
  CHECK(std::abs(model.I0() - rec.action) < 1e-8);
  CHECK(model.D() > 0);
  for (int M : {1, 2}) {
    std::vector<double> x, y;
    for (double lam = 50; lam <= 3200; lam *= 2) {
      auto seed = matched_seed(model.I0(), model.L0(), lam, 0.25, {});
      QuasiOptions o;
      o.M = M;
      auto r = quasi_eigen(seed, model, o);
      CHECK(r.bound_ok);
      CHECK(r.first_residual < 1e-14);
      x.push_back(std::log(r.mu0));
      y.push_back(std::log(r.second_residual));
    }
    double s = num::slope(x, y);
    MESSAGE("M = " << M << " slope " << s);
    CHECK(std::abs(-s - (M + 1)) < 0.3);
  }
}

TEST_CASE("quantization tables") {
  auto d = disk_model(1.1);
  std::vector<QuantizationRecord> recs;
  for (double lam : {60.0, 120.0}) recs.push_back(quasi_eigen(nearest_seed(d.I0(), d.L0(), lam, {}), d));
  std::ostringstream os;
  write_records_csv(os, recs);
  CHECK(os.str().rfind("k,kn,mu0,mu,D,first_residual,second_residual\n", 0) == 0);
  auto j = recs[0].to_json();
  CHECK(j["c"].size() == 3);
  CHECK(j["b"].size() == 4);
  CHECK(j["D"].get<double>() == doctest::Approx(d.D()));
  std::ostringstream hs;
  SearchOptions so;
  write_hits_csv(hs, strong_search(1.0, 2 * M_PI * golden, 100, 0.1, so));
  CHECK(hs.str().rfind("k,kn,mu0,distance\n", 0) == 0);
}
