// Batch front end: one subcommand per experiment family, JSON and CSV reports plus a
// reproduction script per run.
//
// Exit status: 0 success, 1 an invariant check failed, 2 configuration error, 3 module error.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bkam/billiard.hpp"
#include "bkam/circles.hpp"
#include "bkam/errors.hpp"
#include "bkam/geometry.hpp"
#include "bkam/kam.hpp"
#include "bkam/liouville.hpp"
#include "bkam/melrose.hpp"
#include "bkam/numerics.hpp"
#include "bkam/orbits.hpp"
#include "bkam/quantize.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace bk;

namespace {

const double golden = (1 + std::sqrt(5.0)) / 2;

enum class Kind { num, integer, flag, list, text };

struct Param {
  std::string name;
  Kind kind;
  std::string def;  // empty: optional without default
  std::string help;
};

struct Leaf {
  std::string family, action, help;
  bool curve = false;
  std::vector<Param> params;
};

std::vector<Param> curve_params() {
  return {{"ellipse", Kind::list, "", "semi-axes A B (default 2 1)"},
          {"support-a0", Kind::num, "", "support function constant term"},
          {"support-cos", Kind::list, "", "support cosine coefficients, k = 1, 2, ..."},
          {"support-sin", Kind::list, "", "support sine coefficients, k = 1, 2, ..."},
          {"grid", Kind::integer, "4096", "arclength table size"}};
}

std::string num_str(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

const std::vector<Leaf>& leaves() {
  static const std::vector<Leaf> all = [] {
    const std::string w_circle = num_str(2 * M_PI / (golden * golden));
    const std::string w_quant = num_str(2 * M_PI / (golden * golden * golden));
    std::vector<Param> maslov{{"theta0", Kind::integer, "1", "Maslov index (placeholder default)"},
                              {"theta", Kind::integer, "3", "Maslov class (placeholder default)"},
                              {"alt-sign", Kind::flag, "", "use 2 pi k_n - pi theta/2"}};
    std::vector<Param> orbit{{"m", Kind::integer, "2", "number of bounces"},
                             {"winding", Kind::integer, "1", "winding number"},
                             {"s0", Kind::num, "0", "first seed vertex (arclength)"},
                             {"vertices", Kind::list, "", "explicit seed vertices (arclength)"},
                             {"tol", Kind::num, "1e-10", "gradient tolerance"}};
    std::vector<Param> pert{{"omega", Kind::num, "", "frequency (default 2 pi (sqrt 5 - 1)/2)"},
                            {"amp", Kind::num, "1e-3", "perturbation amplitude"},
                            {"perturbation", Kind::text, "single", "single: amp cos theta; "
                                                                   "quadratic: amp (1 + I)(cos theta + cos 2 theta / 2)"},
                            {"fft-grid", Kind::integer, "64", "FFT points"}};
    std::vector<Leaf> v;
    v.push_back({"billiard", "orbit", "one orbit of the billiard map", true,
                 {{"s", Kind::num, "0", "start arclength"},
                  {"p", Kind::num, "0.3", "start tangential momentum"},
                  {"n", Kind::integer, "20", "iterations"}}});
    v.push_back({"billiard", "iterate", "phase portrait from several starts", true,
                 {{"s", Kind::num, "0", "start arclength"},
                  {"starts", Kind::integer, "8", "number of momenta in (-1, 1)"},
                  {"n", Kind::integer, "500", "iterations per start"}}});
    v.push_back({"orbits", "find", "periodic orbit by length criticality", true, orbit});
    auto cl = orbit;
    cl.push_back({"order", Kind::integer, "4", "resonance order N"});
    v.push_back({"orbits", "classify", "periodic orbit and its linear type", true, cl});
    auto tw = orbit;
    tw.push_back({"jet-order", Kind::integer, "4", "Birkhoff jet order (3 or 4)"});
    v.push_back({"orbits", "twist", "twist coefficient at an elliptic orbit", true, tw});
    v.push_back({"circles", "find", "invariant circle at a Diophantine frequency", true,
                 {{"omega", Kind::num, w_circle, "rotation per bounce (radians)"},
                  {"modes", Kind::integer, "64", "Fourier modes"}}});
    v.push_back({"circles", "beta", "beta and I around a frequency", true,
                 {{"omega", Kind::num, w_circle, "centre frequency"},
                  {"spacing", Kind::num, "1e-3", "frequency spacing of the three circles"},
                  {"birkhoff", Kind::integer, "1000000", "iterations of the Birkhoff average"}}});
    v.push_back({"circles", "measure", "Monte Carlo measure of the excluded frequencies", false,
                 {{"lo", Kind::num, "0", "interval start"},
                  {"hi", Kind::num, num_str(2 * M_PI), "interval end"},
                  {"kappa", Kind::num, "0.01", "Diophantine constant"},
                  {"tau", Kind::num, "1.5", "Diophantine exponent"},
                  {"kmax", Kind::integer, "200", "largest denominator"},
                  {"samples", Kind::integer, "100000", "Monte Carlo samples"}}});
    v.push_back({"liouville", "twist", "twist at the elliptic fixed point", true,
                 {{"nodes", Kind::integer, "64", "Gauss-Legendre nodes"}}});
    v.push_back({"liouville", "radon", "Radon transform and its moments", true,
                 {{"level", Kind::num, "", "level h in (q(N), 0) (default q(N)/2)"},
                  {"function", Kind::text, "cos4", "unit | odd | cos4"},
                  {"moments", Kind::integer, "5", "number of moments"}}});
    v.push_back({"liouville", "resonances", "resonant N values", false,
                 {{"nmax", Kind::num, "1", "search bound for N"}}});
    v.push_back({"liouville", "actions", "action table below the top of the well", true,
                 {{"levels", Kind::integer, "16", "number of levels in (0, alpha0]"}}});
    v.push_back({"melrose", "compare", "curvature and circle routes to R'(0), R''(0)", true,
                 {{"degree", Kind::integer, "3", "fit degree in omega^2"},
                  {"max-omega", Kind::num, "0.2", "boundary regime threshold"},
                  {"omegas", Kind::list, "", "circle frequencies (default built-in list)"}}});
    auto st = pert;
    for (Param p : std::vector<Param>{{"sigma", Kind::num, "0.08", "analyticity loss"},
                                      {"eta", Kind::num, "0.12", "action contraction"},
                                      {"K", Kind::integer, "16", "truncation order"},
                                      {"freq-radius", Kind::num, "1e-3", "frequency radius h"},
                                      {"s", Kind::num, "0.5", "strip width"},
                                      {"r", Kind::num, "0.5", "action radius"},
                                      {"enforce", Kind::flag, "", "raise on failed smallness"}})
      st.push_back(p);
    v.push_back({"kam", "step", "one KAM step", false, st});
    auto it = pert;
    for (Param p : std::vector<Param>{{"steps", Kind::integer, "3", "chained steps"},
                                      {"sigma0", Kind::num, "0.08", "initial analyticity loss"},
                                      {"shrink", Kind::num, "0.5", "sigma ratio per step"},
                                      {"s0", Kind::num, "0.9", "initial strip width"},
                                      {"r0", Kind::num, "0.9", "initial action radius"},
                                      {"eta", Kind::num, "0.12", "action contraction"},
                                      {"K-max", Kind::integer, "24", "largest truncation order"}})
      it.push_back(p);
    v.push_back({"kam", "iterate", "chain of KAM steps", false, it});
    v.push_back({"kam", "schedule", "iteration schedule and its conditions", false,
                 {{"n", Kind::integer, "1", "torus dimension"},
                  {"tau", Kind::num, "1.2", "Diophantine exponent"},
                  {"theta", Kind::num, "0.25", "vartheta"},
                  {"theta0", Kind::num, "1.5", "vartheta_0"},
                  {"C0", Kind::num, "2", "step constant"},
                  {"c0", Kind::num, "1", "smallness constant"},
                  {"sigma0", Kind::num, "0.025", "initial sigma"},
                  {"E0", Kind::num, "1e-4", "initial error"},
                  {"m", Kind::integer, "0", "regularity index"},
                  {"J", Kind::integer, "", "index J (default ceil(m (tau + 1)/theta))"},
                  {"jmax", Kind::integer, "50", "last row"},
                  {"ell0-doubled", Kind::flag, "", "ell_0 = 2 tau + 2 + 2 theta0"},
                  {"strict", Kind::flag, "", "raise when E0 >= eta0^2"}}});
    v.push_back({"kam", "smooth", "smoothing error rate", false,
                 {{"ell", Kind::integer, "2", "regularity of the synthetic function"},
                  {"e-lo", Kind::integer, "3", "largest rho = 2^-e_lo"},
                  {"e-hi", Kind::integer, "9", "smallest rho = 2^-e_hi"}}});
    std::vector<Param> se{{"I", Kind::num, "", "action (default from the curve at omega)"},
                          {"L", Kind::num, "", "L(I) (default from the curve at omega)"},
                          {"omega", Kind::num, w_quant, "frequency for curve data"},
                          {"lambda-max", Kind::num, "1000", "scan bound"},
                          {"tol", Kind::num, "0.05", "hit tolerance"},
                          {"no-periodic-check", Kind::flag, "", "skip the non-periodicity proxy"}};
    se.insert(se.end(), maslov.begin(), maslov.end());
    v.push_back({"quantize", "search", "strong quantization search", true, se});
    std::vector<Param> so{{"omega", Kind::num, w_quant, "frequency"},
                          {"M", Kind::integer, "2", "order"},
                          {"lambda0", Kind::num, "50", "first quasi-frequency scale"},
                          {"doublings", Kind::integer, "7", "number of scales"},
                          {"offset", Kind::num, "0.25", "signed lattice offset of the seeds"},
                          {"half-width", Kind::num, "0.03", "omega window of the action fit"},
                          {"fit-count", Kind::integer, "11", "circles in the fit"},
                          {"fit-degree", Kind::integer, "8", "fit degree"}};
    so.insert(so.end(), maslov.begin(), maslov.end());
    v.push_back({"quantize", "solve", "quasi-eigenvalue recursion on curve data", true, so});
    for (auto& l : v)
      if (l.curve) {
        auto c = curve_params();
        l.params.insert(l.params.end(), c.begin(), c.end());
      }
    return v;
  }();
  return all;
}

struct RunConfig {
  std::string family, action;
  std::map<std::string, std::string> scalars;
  std::map<std::string, std::vector<std::string>> lists;
  std::map<std::string, bool> flags;
  std::set<std::string> given;
  fs::path out;
  std::uint64_t seed = 1;
  std::string config_text;

  std::string path(const std::string& name) const { return family + "." + action + "." + name; }
  bool has(const std::string& n) const { return scalars.count(n) ? !scalars.at(n).empty() : lists.count(n) && !lists.at(n).empty(); }

  double num(const std::string& n) const {
    const auto& s = scalars.at(n);
    std::size_t pos = 0;
    double v;
    try {
      v = std::stod(s, &pos);
    } catch (const std::exception&) {
      throw ConfigError(path(n) + ": expected a number, got '" + s + "'");
    }
    if (pos != s.size() || !std::isfinite(v)) throw ConfigError(path(n) + ": expected a number, got '" + s + "'");
    return v;
  }
  int integer(const std::string& n) const {
    const auto& s = scalars.at(n);
    std::size_t pos = 0;
    long v;
    try {
      v = std::stol(s, &pos);
    } catch (const std::exception&) {
      throw ConfigError(path(n) + ": expected an integer, got '" + s + "'");
    }
    if (pos != s.size() || v < INT32_MIN || v > INT32_MAX)
      throw ConfigError(path(n) + ": expected an integer, got '" + s + "'");
    return int(v);
  }
  int positive(const std::string& n) const {
    int v = integer(n);
    if (v < 1) throw ConfigError(path(n) + ": must be positive");
    return v;
  }
  double positive_num(const std::string& n) const {
    double v = num(n);
    if (!(v > 0)) throw ConfigError(path(n) + ": must be positive");
    return v;
  }
  bool flag(const std::string& n) const { return flags.at(n); }
  const std::string& text(const std::string& n) const { return scalars.at(n); }
  std::vector<double> list(const std::string& n) const {
    std::vector<double> v;
    for (const auto& s : lists.at(n)) {
      std::size_t pos = 0;
      double x;
      try {
        x = std::stod(s, &pos);
      } catch (const std::exception&) {
        throw ConfigError(path(n) + ": expected numbers, got '" + s + "'");
      }
      if (pos != s.size()) throw ConfigError(path(n) + ": expected numbers, got '" + s + "'");
      v.push_back(x);
    }
    return v;
  }

  json to_json() const {
    json p = json::object();
    for (const auto& [k, v] : scalars)
      if (!v.empty()) p[k] = v;
    for (const auto& [k, v] : lists)
      if (!v.empty()) p[k] = v;
    for (const auto& [k, v] : flags) p[k] = v;
    return {{"subcommand", family + " " + action}, {"params", p}, {"seed", seed}, {"given", given}};
  }
};

struct Report {
  json results = json::object();
  std::map<std::string, bool> invariants;
  std::vector<std::pair<std::string, std::string>> csv;  // file suffix, content
  void check(const std::string& name, bool ok) { invariants[name] = ok; }
  void add_csv(const std::string& suffix, const std::string& text) { csv.push_back({suffix, text}); }
};

std::string csv_header_rows(const std::string& header, const std::vector<std::vector<double>>& rows) {
  std::ostringstream os;
  os << std::setprecision(17) << header << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------

BoundaryCurve make_curve(const RunConfig& c) {
  const int grid = c.positive("grid");
  bool support = c.has("support-a0") || c.has("support-cos") || c.has("support-sin");
  if (support && c.has("ellipse")) throw ConfigError(c.path("ellipse") + ": give either an ellipse or a support function");
  if (support) {
    SupportCoeffs sc;
    if (c.has("support-a0")) sc.a0 = c.num("support-a0");
    if (c.has("support-cos")) sc.cos_coef = c.list("support-cos");
    if (c.has("support-sin")) sc.sin_coef = c.list("support-sin");
    return BoundaryCurve::support(sc, grid);
  }
  std::vector<double> ab{2.0, 1.0};
  if (c.has("ellipse")) ab = c.list("ellipse");
  if (ab.size() != 2) throw ConfigError(c.path("ellipse") + ": expected two semi-axes");
  return BoundaryCurve::ellipse(ab[0], ab[1], grid);
}

liouville::Profile make_profile(const RunConfig& c) {
  if (c.has("support-a0") || c.has("support-cos") || c.has("support-sin"))
    throw ConfigError(c.path("support-a0") + ": Liouville commands take an ellipse only");
  std::vector<double> ab{2.0, 1.0};
  if (c.has("ellipse")) ab = c.list("ellipse");
  if (ab.size() != 2) throw ConfigError(c.path("ellipse") + ": expected two semi-axes");
  return liouville::ellipse_profile(ab[0], ab[1]);
}

std::vector<double> orbit_seed(const RunConfig& c, const BoundaryCurve& curve, int m, int winding) {
  if (c.has("vertices")) {
    auto v = c.list("vertices");
    if (int(v.size()) != m) throw ConfigError(c.path("vertices") + ": expected m values");
    return v;
  }
  std::vector<double> v;
  const double s0 = c.num("s0"), L = curve.perimeter();
  for (int j = 0; j < m; ++j) v.push_back(num::wrap(s0 + double(j) * winding * L / m, L));
  return v;
}

orbits::PeriodicOrbit find_orbit(const RunConfig& c, const BoundaryCurve& curve, Report& rep) {
  const int m = c.positive("m"), w = c.integer("winding");
  orbits::FindOptions fo;
  fo.tol = c.positive_num("tol");
  auto orb = orbits::find_periodic(curve, m, w, orbit_seed(c, curve, m, w), fo);
  rep.results["orbit"] = orb.to_json();
  rep.check("gradient_below_tol", orb.residual <= fo.tol);
  rep.check("closure_below_1e-8", orb.closure_error < 1e-8);
  std::vector<std::vector<double>> rows;
  for (int j = 0; j < m; ++j) rows.push_back({double(j), orb.vertices[j], orb.momenta[j]});
  rep.add_csv("vertices", csv_header_rows("j,s,p", rows));
  return orb;
}

kam::Hamiltonian make_hamiltonian(const RunConfig& c) {
  kam::Hamiltonian H;
  H.n = 1;
  if (c.has("omega"))
    H.omega = {kam::qreal(c.num("omega"))};
  else
    H.omega = {2 * kam::quad_pi() * (sqrt(kam::qreal(5)) - 1) / 2};
  H.grid = c.positive("fft-grid");
  const double a = c.num("amp");
  const auto& kind = c.text("perturbation");
  if (kind == "single")
    H.P = kam::trig_perturbation({{{1, 0}, a}});
  else if (kind == "quadratic")
    H.P = kam::trig_perturbation({{{1, 0}, a, 0, {1, 0}}, {{2, 0}, a / 2, 0, {1, 0}}});
  else
    throw ConfigError(c.path("perturbation") + ": expected single or quadratic, got '" + kind + "'");
  return H;
}

quantize::Maslov make_maslov(const RunConfig& c) {
  quantize::Maslov m;
  m.theta0 = c.integer("theta0");
  m.theta = c.integer("theta");
  m.alt_sign = c.flag("alt-sign");
  return m;
}

// ---------------------------------------------------------------------------

void run_leaf(const RunConfig& c, Report& rep) {
  const std::string key = c.family + " " + c.action;
  if (key == "billiard orbit") {
    auto curve = make_curve(c);
    PhasePoint z{c.num("s"), c.num("p")};
    if (!(std::abs(z.p) < 1)) throw ConfigError(c.path("p") + ": must lie in (-1, 1)");
    auto seg = iterate(curve, z, c.positive("n"));
    auto J = jacobian(curve, z);
    rep.results["length"] = seg.length;
    rep.results["final"] = {seg.points.back().s, seg.points.back().p};
    rep.results["jacobian_det"] = J.determinant();
    rep.results["curve"] = curve.to_json();
    bool inside = true;
    for (auto& q : seg.points) inside = inside && std::abs(q.p) < 1;
    rep.check("momentum_in_coball", inside);
    rep.check("area_preserving_1e-8", std::abs(J.determinant() - 1) < 1e-8);
    std::ostringstream os;
    write_csv(os, seg);
    rep.add_csv("orbit", os.str());
  } else if (key == "billiard iterate") {
    auto curve = make_curve(c);
    const int starts = c.positive("starts"), n = c.positive("n");
    std::vector<std::vector<double>> rows;
    bool inside = true;
    for (int i = 0; i < starts; ++i) {
      PhasePoint z{c.num("s"), -1 + 2.0 * (i + 1) / (starts + 1)};
      auto seg = iterate(curve, z, n);
      for (std::size_t k = 0; k < seg.points.size(); ++k) {
        rows.push_back({double(i), double(k), seg.points[k].s, seg.points[k].p});
        inside = inside && std::abs(seg.points[k].p) < 1;
      }
    }
    rep.results["points"] = rows.size();
    rep.check("momentum_in_coball", inside);
    rep.add_csv("portrait", csv_header_rows("start,k,s,p", rows));
  } else if (key == "orbits find") {
    auto curve = make_curve(c);
    find_orbit(c, curve, rep);
  } else if (key == "orbits classify") {
    auto curve = make_curve(c);
    auto orb = find_orbit(c, curve, rep);
    auto cl = orbits::classify(curve, orb, c.positive("order"));
    rep.results["classification"] = cl.to_json();
    rep.check("det_one_1e-8", std::abs(cl.det - 1) < 1e-8);
  } else if (key == "orbits twist") {
    auto curve = make_curve(c);
    auto orb = find_orbit(c, curve, rep);
    orbits::TwistOptions to;
    to.jet_order = c.integer("jet-order");
    if (to.jet_order != 3 && to.jet_order != 4) throw ConfigError(c.path("jet-order") + ": expected 3 or 4");
    auto tw = orbits::twist_at_elliptic(curve, orb, to);
    rep.results["twist"] = tw.to_json();
    rep.check("jet_and_circles_agree", tw.cross_residual <= tw.cross_tolerance);
    std::vector<std::vector<double>> rows;
    for (auto& s : tw.samples) rows.push_back({s.action, s.rotation, double(s.iterations)});
    rep.add_csv("circles", csv_header_rows("action,rotation,iterations", rows));
  } else if (key == "circles find") {
    auto curve = make_curve(c);
    circles::CircleOptions co;
    co.modes = c.positive("modes");
    auto r = circles::find_circle(curve, c.num("omega"), {}, co);
    rep.results["circle"] = r.to_json();
    rep.check("conjugacy_residual_1e-8", r.residual < 1e-8);
    std::ostringstream os;
    circles::write_table_csv(os, {r});
    rep.add_csv("table", os.str());
  } else if (key == "circles beta") {
    auto curve = make_curve(c);
    const double w = c.num("omega"), h = c.positive_num("spacing");
    std::vector<circles::InvariantCircleRecord> rs;
    rs.push_back(circles::find_circle(curve, w));
    for (double x : {w - h, w + h}) {
      circles::CircleSeed s;
      s.from = rs.front();
      rs.push_back(circles::find_circle(curve, x, s));
    }
    auto id = circles::bnf_identity_residual(rs);
    double bb = circles::birkhoff_beta(curve, rs.front().at(0.0), c.positive("birkhoff"));
    rep.results["identity"] = id.to_json();
    rep.results["beta_conjugacy"] = rs.front().beta;
    rep.results["beta_birkhoff"] = bb;
    rep.check("dbeta_domega_equals_I_1e-5", id.residual < 1e-5);
    rep.check("birkhoff_matches_1e-6", std::abs(bb - rs.front().beta) < 1e-6);
    std::ostringstream os;
    circles::write_table_csv(os, rs);
    rep.add_csv("table", os.str());
  } else if (key == "circles measure") {
    circles::DiophantineSpec sp{c.positive_num("kappa"), c.num("tau"), c.positive("kmax")};
    double f = circles::measure_omega_kappa(c.num("lo"), c.num("hi"), sp, c.positive("samples"), c.seed);
    rep.results["excluded_fraction"] = f;
    rep.check("fraction_in_unit_interval", f >= 0 && f <= 1);
    rep.add_csv("measure", csv_header_rows("kappa,tau,kmax,excluded_fraction",
                                           {{sp.kappa, sp.tau, double(sp.kmax), f}}));
  } else if (key == "liouville twist") {
    auto p = make_profile(c);
    liouville::Options o;
    o.nodes = c.positive("nodes");
    auto t = liouville::twist_report(p, o);
    rep.results["twist"] = t.to_json();
    rep.check("routes_agree_1e-6", t.max_discrepancy < 1e-6);
    rep.check("twisted", t.twisted);
    rep.add_csv("twist", csv_header_rows("dKdI_integral,d2KdI2_integral,dKdI_quadrature,d2KdI2_quadrature",
                                         {{t.dKdI_integral, t.d2KdI2_integral, t.dKdI_quadrature,
                                           t.d2KdI2_quadrature}}));
  } else if (key == "liouville radon") {
    auto p = make_profile(c);
    const double qN = p.q(p.N);
    const double h = c.has("level") ? c.num("level") : 0.5 * qN;
    const auto& fn = c.text("function");
    liouville::Fn K;
    bool odd = false;
    if (fn == "unit")
      K = [&](double x) { return std::sqrt(p.f(x) - qN); };
    else if (fn == "odd") {
      K = [&](double x) { return std::sqrt(p.f(x) - qN) * std::sin(2 * M_PI * x); };
      odd = true;
    } else if (fn == "cos4")
      K = [&](double x) { return std::sqrt(p.f(x) - qN) * std::cos(4 * M_PI * x); };
    else
      throw ConfigError(c.path("function") + ": expected unit, odd or cos4, got '" + fn + "'");
    double R = liouville::radon(p, K, h);
    rep.results["level"] = h;
    rep.results["radon"] = R;
    if (odd) {
      rep.check("parity_annihilation", std::abs(R) < 1e-12);
    } else {
      auto mr = liouville::radon_moments(p, K, c.positive("moments"));
      rep.results["moments"] = mr.moments;
      rep.results["first_nonzero"] = mr.first_nonzero;
      if (fn == "unit") rep.check("unit_maps_to_sqrt", std::abs(R - std::sqrt(h - qN)) < 1e-10);
      rep.check("nonzero_moment", mr.first_nonzero >= 0);
      std::vector<std::vector<double>> rows;
      for (std::size_t k = 0; k < mr.moments.size(); ++k) rows.push_back({double(k), mr.moments[k], mr.normalized[k]});
      rep.add_csv("moments", csv_header_rows("k,moment,normalized", rows));
    }
  } else if (key == "liouville resonances") {
    auto lv = liouville::resonant_levels(c.positive_num("nmax"));
    std::vector<std::vector<double>> rows;
    json arr = json::array();
    bool ok = true;
    for (auto& l : lv) {
      rows.push_back({l.rho, l.N});
      arr.push_back({{"rho", l.rho}, {"N", l.N}});
      ok = ok && std::abs(-(2 / M_PI) * std::atan(std::sinh(2 * M_PI * l.N)) - l.rho) < 1e-10;
    }
    rep.results["levels"] = arr;
    rep.check("five_levels", lv.size() == 5);
    rep.check("defining_equation_1e-10", ok);
    rep.add_csv("levels", csv_header_rows("rho,N", rows));
  } else if (key == "liouville actions") {
    auto p = make_profile(c);
    liouville::complete_jet(p);
    const int n = c.positive("levels");
    const double a0 = *p.alpha0;
    std::vector<std::vector<double>> rows;
    bool mono = true;
    double prev = INFINITY;
    for (int i = 1; i <= n; ++i) {
      double h = a0 * i / n;
      auto a = liouville::actions(p, h);
      rows.push_back({h, a.K, a.I, a.dK, a.dI});
      mono = mono && a.I < prev;
      prev = a.I;
    }
    rep.results["alpha0"] = a0;
    rep.results["levels"] = n;
    rep.check("I_decreasing_in_h", mono);
    rep.check("I_vanishes_at_alpha0_1e-10", std::abs(rows.back()[2]) < 1e-10);
    rep.add_csv("actions", csv_header_rows("h,K,I,dK,dI", rows));
  } else if (key == "melrose compare") {
    auto curve = make_curve(c);
    melrose::FitOptions fo;
    fo.degree = c.positive("degree");
    fo.max_omega = c.positive_num("max-omega");
    auto om = c.has("omegas") ? c.list("omegas") : melrose::default_omegas();
    auto r = melrose::compare(curve, om, fo);
    rep.results["melrose"] = r.to_json();
    rep.check("dR0_routes_agree_2e-3", r.residual_dR0 < 2e-3);
    std::ostringstream os;
    circles::write_table_csv(os, r.records);
    rep.add_csv("circles", os.str());
  } else if (key == "kam step") {
    auto H = make_hamiltonian(c);
    H.s = c.positive_num("s");
    H.r = c.positive_num("r");
    kam::StepParams p;
    p.sigma = c.positive_num("sigma");
    p.eta = c.positive_num("eta");
    p.K = c.positive("K");
    p.h = c.positive_num("freq-radius");
    p.enforce_smallness = c.flag("enforce");
    auto st = kam::kam_step(H, p);
    rep.results["step"] = st.to_json();
    rep.check("homological_residual_1e-12", st.homological_residual < 1e-12);
    rep.check("symplectic_defect_1e-8", st.symplectic_defect < 1e-8);
    std::vector<std::vector<double>> rows;
    for (auto& m : st.F.modes)
      rows.push_back({double(m.k[0]), static_cast<double>(m.a.real()), static_cast<double>(m.a.imag()),
                      static_cast<double>(m.b[0].real()), static_cast<double>(m.b[0].imag())});
    rep.add_csv("generator", csv_header_rows("k,a_re,a_im,b_re,b_im", rows));
  } else if (key == "kam iterate") {
    auto H = make_hamiltonian(c);
    kam::ChainOptions o;
    o.steps = c.positive("steps");
    o.sigma0 = c.positive_num("sigma0");
    o.shrink = c.positive_num("shrink");
    o.s0 = c.positive_num("s0");
    o.r0 = c.positive_num("r0");
    o.eta = c.positive_num("eta");
    o.K_max = c.positive("K-max");
    auto ch = kam::kam_chain(H, o);
    rep.results["chain"] = ch.to_json();
    bool res = true, sym = true;
    for (std::size_t j = 0; j + 1 < ch.rows.size(); ++j) {
      res = res && ch.rows[j].homological_residual < 1e-12;
      sym = sym && ch.rows[j].symplectic_defect < 1e-8;
    }
    rep.check("homological_residual_1e-12", res);
    rep.check("symplectic_defect_1e-8", sym);
    rep.check("quadratic_slope_1.8_2.2", ch.slope_defined && ch.slope >= 1.8 && ch.slope <= 2.2);
    std::ostringstream os;
    kam::write_chain_csv(os, ch);
    rep.add_csv("chain", os.str());
  } else if (key == "kam schedule") {
    kam::ScheduleParams p;
    p.n = c.positive("n");
    p.tau = c.num("tau");
    p.vartheta = c.num("theta");
    p.vartheta0 = c.num("theta0");
    p.C0 = c.num("C0");
    p.c0 = c.num("c0");
    p.sigma0 = c.num("sigma0");
    p.E0 = c.num("E0");
    p.m = c.integer("m");
    if (c.has("J")) p.J = c.integer("J");
    p.jmax = c.integer("jmax");
    p.ell0_doubled = c.flag("ell0-doubled");
    p.strict = c.flag("strict");
    auto s = kam::build_schedule(p);
    rep.results["schedule"] = s.to_json();
    rep.check("all_conditions_hold", s.all_ok());
    std::ostringstream os;
    kam::write_schedule_csv(os, s);
    rep.add_csv("schedule", os.str());
  } else if (key == "kam smooth") {
    const int ell = c.positive("ell");
    auto r = kam::smoothing_rate(ell, c.positive("e-lo"), c.positive("e-hi"));
    rep.results["smoothing"] = r.to_json();
    rep.check("slope_within_0.15_of_ell", std::abs(r.slope - ell) < 0.15);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < r.rho.size(); ++i) rows.push_back({r.rho[i], r.error[i]});
    rep.add_csv("rate", csv_header_rows("rho,error", rows));
  } else if (key == "quantize search") {
    double I, L;
    if (c.has("I") != c.has("L")) throw ConfigError(c.path(c.has("I") ? "L" : "I") + ": give both I and L");
    if (c.has("I")) {
      I = c.num("I");
      L = c.num("L");
    } else {
      auto curve = make_curve(c);
      auto m = quantize::model_from_circles(curve, c.num("omega"));
      I = m.I0();
      L = m.L0();
      rep.results["model"] = m.to_json();
    }
    quantize::SearchOptions so;
    so.maslov = make_maslov(c);
    so.check_periodic = !c.flag("no-periodic-check");
    auto hits = quantize::strong_search(I, L, c.num("lambda-max"), c.num("tol"), so);
    json arr = json::array();
    for (auto& h : hits) arr.push_back({{"k", h.k}, {"kn", h.kn}, {"mu0", h.mu0}, {"distance", h.distance}});
    rep.results["I"] = I;
    rep.results["L"] = L;
    rep.results["hits"] = arr;
    bool ok = true;
    for (auto& h : hits) ok = ok && h.distance < c.num("tol");
    rep.check("hits_within_tol", ok);
    std::ostringstream os;
    quantize::write_hits_csv(os, hits);
    rep.add_csv("hits", os.str());
  } else if (key == "quantize solve") {
    auto curve = make_curve(c);
    quantize::ModelOptions mo;
    mo.half_width = c.positive_num("half-width");
    mo.count = c.positive("fit-count");
    mo.degree = c.positive("fit-degree");
    auto model = quantize::model_from_circles(curve, c.num("omega"), mo);
    auto rec = circles::find_circle(curve, c.num("omega"));
    quantize::QuasiOptions qo;
    qo.maslov = make_maslov(c);
    qo.M = c.integer("M");
    std::vector<quantize::QuantizationRecord> recs;
    std::vector<double> lx, ly;
    double lam = c.num("lambda0");
    for (int i = 0; i < c.positive("doublings"); ++i, lam *= 2) {
      auto seed = quantize::matched_seed(model.I0(), model.L0(), lam, c.num("offset"), qo.maslov);
      recs.push_back(quantize::quasi_eigen(seed, model, qo));
      lx.push_back(std::log(recs.back().mu0));
      ly.push_back(std::log(recs.back().second_residual));
    }
    double slope = lx.size() >= 2 ? num::slope(lx, ly) : NAN;
    json arr = json::array();
    bool first = true;
    for (auto& r : recs) {
      arr.push_back(r.to_json());
      first = first && r.first_residual < 1e-14;
    }
    rep.results["model"] = model.to_json();
    rep.results["records"] = arr;
    rep.results["residual_slope"] = slope;
    rep.results["D_minus_circle_minus_beta"] = model.D() + rec.beta;
    rep.check("first_residual_1e-14", first);
    rep.check("D_matches_circle_1e-8", std::abs(model.D() + rec.beta) < 1e-8);
    rep.check("slope_within_0.3_of_M_plus_1", std::abs(-slope - (qo.M + 1)) < 0.3);
    std::ostringstream os;
    quantize::write_records_csv(os, recs);
    rep.add_csv("records", os.str());
  } else {
    throw ConfigError("subcommand: unknown '" + key + "'");
  }
}

// ---------------------------------------------------------------------------

struct Parsed {
  RunConfig cfg;
  std::string emitted;  // config text with the options given on this run
};

Parsed parse(int argc, const char* const* argv) {
  CLI::App app{"Billiard KAM experiments"};
  app.set_config("--config", "", "flat key = value file, [family.action] sections; flags win");
  app.require_subcommand(1);
  std::string out;
  std::uint64_t seed = 1;
  app.add_option("--out", out, "output directory (default $BKAM_OUT or bkam_out)");
  app.add_option("--seed", seed, "RNG seed");

  struct Store {
    std::map<std::string, std::string> scalars;
    std::map<std::string, std::vector<std::string>> lists;
    std::map<std::string, bool> flags;
  };
  std::map<std::string, Store> stores;
  std::map<std::string, CLI::App*> fam;
  std::map<std::string, CLI::App*> leaf_apps;
  for (const auto& l : leaves()) {
    if (!fam.count(l.family)) {
      fam[l.family] = app.add_subcommand(l.family, l.family + " experiments")->configurable();
      fam[l.family]->require_subcommand(1);
    }
    auto* sub = fam[l.family]->add_subcommand(l.action, l.help)->configurable();
    const std::string id = l.family + "." + l.action;
    leaf_apps[id] = sub;
    auto& st = stores[id];
    for (const auto& p : l.params) {
      const std::string opt = "--" + p.name;
      switch (p.kind) {
        case Kind::flag:
          st.flags[p.name] = false;
          sub->add_flag(opt, st.flags[p.name], p.help);
          break;
        case Kind::list:
          st.lists[p.name];
          sub->add_option(opt, st.lists[p.name], p.help)->expected(1, 64);
          break;
        default:
          st.scalars[p.name] = p.def;
          sub->add_option(opt, st.scalars[p.name], p.help);
      }
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::exit(app.exit(e));
  } catch (const CLI::CallForAllHelp& e) {
    std::exit(app.exit(e));
  } catch (const CLI::ParseError& e) {
    std::string where = "subcommand";
    for (auto* s : app.get_subcommands()) {
      where = s->get_name();
      for (auto* t : s->get_subcommands()) where += "." + t->get_name();
    }
    throw ConfigError(where + ": " + e.what());
  }
  Parsed p;
  RunConfig& c = p.cfg;
  auto* f = app.get_subcommands().front();
  auto* a = f->get_subcommands().front();
  c.family = f->get_name();
  c.action = a->get_name();
  const auto& st = stores[c.family + "." + c.action];
  c.scalars = st.scalars;
  c.lists = st.lists;
  c.flags = st.flags;
  for (const auto* o : a->get_options())
    if (o->count() > 0) {
      auto n = o->get_name(false, true);
      if (n.rfind("--", 0) == 0) c.given.insert(n.substr(2));
    }
  if (out.empty()) {
    const char* env = std::getenv("BKAM_OUT");
    out = env && *env ? env : "bkam_out";
  }
  c.out = out;
  c.seed = seed;
  // reproduction config: only what was given, defaults come from the same build
  std::ostringstream cf;
  cf << "seed=" << seed << "\n[" << c.family << "." << c.action << "]\n";
  for (const auto& n : c.given) {
    if (c.flags.count(n))
      cf << n << "=" << (c.flags.at(n) ? "true" : "false") << "\n";
    else if (c.lists.count(n)) {
      cf << n << "=[";
      for (std::size_t i = 0; i < c.lists.at(n).size(); ++i) cf << (i ? ", " : "") << c.lists.at(n)[i];
      cf << "]\n";
    } else {
      cf << n << "=\"" << c.scalars.at(n) << "\"\n";
    }
  }
  p.emitted = cf.str();
  c.config_text = p.emitted;
  return p;
}

int execute(const Parsed& p, std::ostream& out) {
  const RunConfig& c = p.cfg;
  Report rep;
  run_leaf(c, rep);
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw ConfigError("out: cannot create '" + c.out.string() + "': " + ec.message());
  const std::string stem = c.family + "_" + c.action;
  bool ok = true;
  json inv = json::object();
  for (const auto& [k, v] : rep.invariants) {
    inv[k] = v;
    ok = ok && v;
  }
  json doc = {{"schema", 1},
              {"command", c.family + " " + c.action},
              {"config", c.to_json()},
              {"results", rep.results},
              {"invariants", inv},
              {"status", ok ? "ok" : "invariant_failure"}};
  auto write = [&](const std::string& name, const std::string& text) {
    fs::path path = c.out / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("out: cannot write '" + path.string() + "'");
    f << text;
    out << "wrote " << path.string() << "\n";
  };
  write(stem + ".json", doc.dump(2) + "\n");
  for (const auto& [suffix, text] : rep.csv) write(stem + "_" + suffix + ".csv", text);
  write(stem + ".cfg", p.emitted);
  std::string exe = fs::canonical("/proc/self/exe", ec).string();
  if (ec) exe = "bkam";
  std::ostringstream sh;
  sh << "#!/bin/sh\n# regenerates the " << c.family << " " << c.action << " reports; optional argument: output directory\n"
     << "here=$(dirname \"$0\")\n"
     << "exec \"" << exe << "\" --config \"$here/" << stem << ".cfg\" --out \"${1:-$here}\"\n";
  write("reproduce_" + stem + ".sh", sh.str());
  fs::permissions(c.out / ("reproduce_" + stem + ".sh"), fs::perms::owner_exec | fs::perms::group_exec |
                                                              fs::perms::others_exec,
                  fs::perm_options::add, ec);
  for (const auto& [k, v] : rep.invariants) out << (v ? "ok    " : "FAIL  ") << k << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  Parsed p;
  try {
    p = parse(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  try {
    return execute(p, std::cout);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << p.cfg.family << " " << p.cfg.action << ": " << e.what() << "\n";
    return 3;
  }
}
