#include "bkam/kam.hpp"

#include <algorithm>
#include <cmath>
#include <fftw3.h>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include <boost/math/constants/constants.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "bkam/errors.hpp"
#include "bkam/numerics.hpp"

namespace bk::kam {

using num::pi;

namespace {

const qreal qpi = boost::math::constants::pi<qreal>();

qreal qabs(const qcomplex& z) { return sqrt(z.real() * z.real() + z.imag() * z.imag()); }
qcomplex qexpi(const qreal& x) { return {cos(x), sin(x)}; }

int l1(const Multi& k) { return std::abs(k[0]) + std::abs(k[1]); }

// Unnormalized bump on (0, 1).
double bump(double t) {
  if (t <= 0 || t >= 1) return 0.0;
  double x = 2 * t - 1;
  return std::exp(-1 / (1 - x * x));
}

double bump_integral(double t) {
  if (t <= 0) return 0.0;
  t = std::min(t, 1.0);
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(bump, 0.0, t, 15, 1e-11);
}

}  // namespace

qreal quad_pi() { return qpi; }

// ---------------------------------------------------------------------------

double smooth_cutoff(double x, double a, double b) {
  if (!(b > a) || a < 0) throw InvalidArgument("cutoff needs 0 <= a < b");
  double ax = std::abs(x);
  if (ax <= a) return 1.0;
  if (ax >= b) return 0.0;
  static const double total = bump_integral(1.0);
  return 1.0 - bump_integral((ax - a) / (b - a)) / total;
}

namespace {

double pairing(const std::vector<double>& omega, const std::vector<int>& k) {
  if (omega.size() != k.size()) throw InvalidArgument("frequency and mode dimensions differ");
  double d = 0;
  for (size_t i = 0; i < k.size(); ++i) d += omega[i] * k[i];
  return d;
}

int l1(const std::vector<int>& k) {
  int s = 0;
  for (int v : k) s += std::abs(v);
  return s;
}

}  // namespace

double regularization(const std::vector<double>& omega, const std::vector<int>& k, const DivisorSpec& spec) {
  int nk = l1(k);
  if (nk == 0) throw InvalidArgument("divisor needs k != 0");
  double x = num::wrap_pi(pairing(omega, k));
  double phi = smooth_cutoff(x * std::pow(double(nk), spec.tau) / spec.kappa, pi / 5, pi / 4);
  return spec.kappa / 3 * std::pow(1.0 + nk, -spec.tau) * phi;
}

std::complex<double> modified_divisor(const std::vector<double>& omega, const std::vector<int>& k,
                                      const DivisorSpec& spec) {
  double reg = regularization(omega, k, spec);
  return 1.0 - std::polar(1.0, pairing(omega, k)) + reg;
}

HomologicalSolution solve_homological(const std::vector<FourierMode>& F, const std::vector<double>& omega,
                                      const DivisorSpec& spec) {
  HomologicalSolution out;
  for (auto& m : F)
    if (l1(m.k) == 0) out.c -= m.c;
  for (auto& m : F) {
    if (l1(m.k) == 0) {
      out.residual.push_back(std::abs(-out.c - m.c));
      continue;
    }
    auto z = modified_divisor(omega, m.k, spec);
    std::complex<double> f = -m.c / z;
    out.f.push_back({m.k, f});
    out.max_amplification = std::max(out.max_amplification, 1 / std::abs(z));
    out.residual.push_back(std::abs(f * (std::polar(1.0, pairing(omega, m.k)) - 1.0) - m.c));
  }
  for (double r : out.residual) out.max_residual = std::max(out.max_residual, r);
  return out;
}

// ---------------------------------------------------------------------------

SmoothingReport smooth(const std::vector<double>& samples, double rho, const SmoothingKernel& kernel) {
  if (!(rho > 0 && rho <= 1)) throw InvalidArgument("smoothing scale must lie in (0, 1]");
  const int N = int(samples.size());
  if (N < 2) throw InvalidArgument("need at least two samples");
  auto c = num::real_fourier(samples);
  SmoothingReport rep;
  for (size_t k = 0; k < c.size(); ++k) {
    double m = kernel(rho * double(k));
    c[k] *= m;
    if (m > 0) rep.last_mode = int(k);
    if (double(k) * rho >= kernel.support) rep.tail_max = std::max(rep.tail_max, std::abs(c[k]));
  }
  rep.samples = num::eval_fourier(c, N);
  return rep;
}

SmoothingRate smoothing_rate(int ell, int e_lo, int e_hi, int log2_modes) {
  if (ell < 1) throw InvalidArgument("regularity must be at least 1");
  if (e_lo < 1 || e_hi <= e_lo) throw InvalidArgument("need 1 <= e_lo < e_hi");
  if (log2_modes < e_hi + 2 || log2_modes > 22) throw InvalidArgument("log2_modes out of range");
  const int modes = 1 << log2_modes, N = 2 * modes;
  std::vector<std::complex<double>> c(modes + 1, 0.0);
  for (int k = 1; k <= modes; ++k) c[k] = 0.5 * std::pow(double(k), -(ell + 1));
  auto f = num::eval_fourier(c, N);
  SmoothingRate r;
  r.ell = ell;
  std::vector<double> lx, ly;
  for (int e = e_lo; e <= e_hi; ++e) {
    double rho = std::ldexp(1.0, -e);
    auto rep = smooth(f, rho);
    double err = 0;
    for (int j = 0; j < N; ++j) err = std::max(err, std::abs(rep.samples[j] - f[j]));
    r.rho.push_back(rho);
    r.error.push_back(err);
    lx.push_back(std::log(rho));
    ly.push_back(std::log(err));
  }
  r.slope = num::slope(lx, ly);
  return r;
}

nlohmann::json SmoothingRate::to_json() const {
  return {{"ell", ell}, {"rho", rho}, {"error", error}, {"slope", slope}};
}

// ---------------------------------------------------------------------------

namespace {

class TrigPerturbation : public Perturbation {
 public:
  explicit TrigPerturbation(std::vector<TrigTerm> t) : terms_(std::move(t)) {}
  qreal value(const QVec& th, const QVec& I) const override {
    qreal v = 0;
    for (auto& t : terms_) {
      qreal arg = qreal(t.k[0]) * th[0] + qreal(t.k[1]) * th[1] + qreal(t.phase);
      v += qreal(t.amp) * (1 + qreal(t.slope[0]) * I[0] + qreal(t.slope[1]) * I[1]) * cos(arg);
    }
    return v;
  }

 private:
  std::vector<TrigTerm> terms_;
};

class FunctionPerturbation : public Perturbation {
 public:
  explicit FunctionPerturbation(std::function<qreal(const QVec&, const QVec&)> f) : f_(std::move(f)) {}
  qreal value(const QVec& th, const QVec& I) const override { return f_(th, I); }

 private:
  std::function<qreal(const QVec&, const QVec&)> f_;
};

}  // namespace

PerturbationPtr trig_perturbation(std::vector<TrigTerm> terms) {
  return std::make_shared<TrigPerturbation>(std::move(terms));
}
PerturbationPtr function_perturbation(std::function<qreal(const QVec&, const QVec&)> f) {
  return std::make_shared<FunctionPerturbation>(std::move(f));
}

// ---------------------------------------------------------------------------

int AffineTrig::degree() const {
  int d = 0;
  for (auto& m : modes) d = std::max(d, l1(m.k));
  return d;
}

const AffineTrig::Mode* AffineTrig::find(const Multi& k) const {
  for (auto& m : modes)
    if (m.k == k) return &m;
  return nullptr;
}

void AffineTrig::eval(const QVec& th, const QVec& I, qreal& v, QVec& dth, QVec& dI) const {
  v = 0;
  dth = {0, 0};
  dI = {0, 0};
  if (modes.empty()) return;
  int M0 = 0, M1 = 0;
  for (auto& m : modes) {
    M0 = std::max(M0, std::abs(m.k[0]));
    M1 = std::max(M1, std::abs(m.k[1]));
  }
  // tables of e^{i k theta_d} for |k| <= M_d
  thread_local std::vector<qcomplex> p0, p1;
  auto table = [](std::vector<qcomplex>& p, int M, const qreal& x) {
    p.assign(2 * M + 1, qcomplex(1, 0));
    qcomplex e = qexpi(x), c(1, 0);
    for (int k = 1; k <= M; ++k) {
      c *= e;
      p[M + k] = c;
      p[M - k] = std::conj(c);
    }
  };
  table(p0, M0, th[0]);
  table(p1, M1, n > 1 ? th[1] : qreal(0));
  // Hermitian: the k and -k terms are conjugate, so only k > 0 (lexicographic) is summed, twice
  for (auto& m : modes) {
    bool zero = m.k[0] == 0 && m.k[1] == 0;
    if (!zero && (m.k[0] < 0 || (m.k[0] == 0 && m.k[1] < 0))) continue;
    qreal w = zero ? qreal(1) : qreal(2);
    qcomplex e = p0[M0 + m.k[0]] * p1[M1 + m.k[1]];
    qcomplex c = m.a + m.b[0] * I[0] + m.b[1] * I[1];
    qcomplex ce = c * e;
    v += w * ce.real();
    // d/dtheta_d of c e^{i<k,theta>} is i k_d c e
    qreal im = w * ce.imag();
    dth[0] -= qreal(m.k[0]) * im;
    dth[1] -= qreal(m.k[1]) * im;
    dI[0] += w * (m.b[0] * e).real();
    if (n > 1) dI[1] += w * (m.b[1] * e).real();
  }
}

qreal AffineTrig::value(const QVec& th, const QVec& I) const {
  qreal v;
  QVec a, b;
  eval(th, I, v, a, b);
  return v;
}

// ---------------------------------------------------------------------------

namespace {

// Fourth-order central differences in I: exact for polynomials of degree <= 4 in I, which is what the
// composed perturbations are when P is, and the step keeps quad roundoff near 1e-33.
const qreal fd_step = qreal(1) / 10000;

// Grid point index -> angles; row-major for n = 2.
QVec grid_point(int idx, int n, int G) {
  QVec th{0, 0};
  qreal h = 2 * qpi / G;
  if (n == 1) {
    th[0] = h * idx;
  } else {
    th[0] = h * (idx / G);
    th[1] = h * (idx % G);
  }
  return th;
}

int grid_size(int n, int G) { return n == 1 ? G : G * G; }

std::vector<qreal> sample_grid(const Perturbation& P, int n, int G, const QVec& I) {
  std::vector<qreal> out(grid_size(n, G));
  for (int i = 0; i < int(out.size()); ++i) out[i] = P.value(grid_point(i, n, G), I);
  return out;
}

// Normalized DFT: c_k = mean f e^{-i<k, theta>}, FFTW index layout.
std::vector<qcomplex> fourier(const std::vector<qreal>& f, int n, int G) {
  const int N = int(f.size());
  auto* buf = static_cast<fftwq_complex*>(fftwq_malloc(sizeof(fftwq_complex) * N));
  fftwq_plan plan;
  {
    std::lock_guard<std::mutex> lock(num::fftw_planner_mutex());
    plan = n == 1 ? fftwq_plan_dft_1d(G, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE)
                  : fftwq_plan_dft_2d(G, G, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  for (int i = 0; i < N; ++i) {
    buf[i][0] = f[i].backend().value();
    buf[i][1] = 0;
  }
  fftwq_execute(plan);
  std::vector<qcomplex> c(N);
  for (int i = 0; i < N; ++i) c[i] = qcomplex(qreal(buf[i][0]) / N, qreal(buf[i][1]) / N);
  {
    std::lock_guard<std::mutex> lock(num::fftw_planner_mutex());
    fftwq_destroy_plan(plan);
  }
  fftwq_free(buf);
  return c;
}

int signed_mode(int j, int G) { return j <= G / 2 ? j : j - G; }

Multi index_mode(int idx, int n, int G) {
  if (n == 1) return {signed_mode(idx, G), 0};
  return {signed_mode(idx / G, G), signed_mode(idx % G, G)};
}

int mode_index(const Multi& k, int n, int G) {
  int i0 = ((k[0] % G) + G) % G;
  if (n == 1) return i0;
  return i0 * G + ((k[1] % G) + G) % G;
}

double proxy_of(const std::vector<qcomplex>& c, int n, int G, double s) {
  qreal sum = 0;
  for (int i = 0; i < int(c.size()); ++i) sum += qabs(c[i]) * exp(qreal(l1(index_mode(i, n, G))) * qreal(s));
  return static_cast<double>(sum);
}

}  // namespace

void Hamiltonian::validate() const {
  if (n != 1 && n != 2) throw InvalidArgument("torus dimension must be 1 or 2");
  if (int(omega.size()) != n) throw InvalidArgument("frequency vector has the wrong dimension");
  if (!P) throw InvalidArgument("missing perturbation");
  if (grid < 8 || (grid & (grid - 1)) != 0) throw InvalidArgument("grid must be a power of two >= 8");
  if (!(s > 0) || !(r > 0)) throw InvalidArgument("strip width and action radius must be positive");
}

const Hamiltonian::Samples& Hamiltonian::samples() const {
  if (cache_ && cache_P_ == P.get() && cache_grid_ == grid) return *cache_;
  validate();
  auto S = std::make_shared<Samples>();
  const int N = grid_size(n, grid);
  S->value.resize(N);
  for (int d = 0; d < n; ++d) S->grad[d].resize(N);
  for (int i = 0; i < N; ++i) {
    QVec th = grid_point(i, n, grid);
    S->value[i] = P->value(th, {0, 0});
    for (int d = 0; d < n; ++d) {
      auto at = [&](int m) {
        QVec I{0, 0};
        I[d] = m * fd_step;
        return P->value(th, I);
      };
      S->grad[d][i] = (8 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12 * fd_step);
    }
  }
  cache_ = S;
  cache_P_ = P.get();
  cache_grid_ = grid;
  return *cache_;
}

double strip_norm_proxy(const Hamiltonian& H, double s, double r) {
  if (s < 0 || r < 0) throw InvalidArgument("proxy parameters must be nonnegative");
  auto& S = H.samples();
  double best = proxy_of(fourier(S.value, H.n, H.grid), H.n, H.grid, s);
  if (r > 0) {
    for (int d = 0; d < H.n; ++d)
      for (int sg : {-1, 1}) {
        QVec I{0, 0};
        I[d] = qreal(sg * r);
        best = std::max(best, proxy_of(fourier(sample_grid(*H.P, H.n, H.grid, I), H.n, H.grid), H.n, H.grid, s));
      }
  }
  return best;
}

double strip_norm_proxy(const std::vector<double>& samples, double s) {
  if (samples.empty()) throw InvalidArgument("empty sample");
  auto c = num::real_fourier(samples);
  const int N = int(samples.size());
  double sum = std::abs(c[0]);
  for (size_t k = 1; k < c.size(); ++k) {
    // the Nyquist coefficient of an even grid appears once
    double w = (N % 2 == 0 && int(k) == N / 2) ? 1.0 : 2.0;
    sum += w * std::abs(c[k]) * std::exp(double(k) * s);
  }
  return sum;
}

// ---------------------------------------------------------------------------

std::string Smallness::failed() const {
  std::ostringstream os;
  os.precision(6);
  auto put = [&](const char* name, double m) {
    if (m < 0) os << (os.tellp() > 0 ? ", " : "") << "(" << name << ") margin " << m;
  };
  put("a", a);
  put("b", b);
  put("c", c);
  return os.str();
}

namespace {

using State = std::array<qreal, 4>;  // theta_0, theta_1, I_0, I_1

State rhs(const AffineTrig& F, const State& y) {
  qreal v;
  QVec dth, dI;
  F.eval({y[0], y[1]}, {y[2], y[3]}, v, dth, dI);
  State d{dI[0], dI[1], -dth[0], -dth[1]};
  if (F.n == 1) d[1] = d[3] = 0;
  return d;
}

State rk4(const AffineTrig& F, State y, const qreal& t, int steps) {
  if (steps <= 0 || t == 0 || F.modes.empty()) return y;
  qreal h = t / steps;
  for (int i = 0; i < steps; ++i) {
    State k1 = rhs(F, y), y2, y3, y4;
    for (int c = 0; c < 4; ++c) y2[c] = y[c] + h / 2 * k1[c];
    State k2 = rhs(F, y2);
    for (int c = 0; c < 4; ++c) y3[c] = y[c] + h / 2 * k2[c];
    State k3 = rhs(F, y3);
    for (int c = 0; c < 4; ++c) y4[c] = y[c] + h * k3[c];
    State k4 = rhs(F, y4);
    for (int c = 0; c < 4; ++c) y[c] += h / 6 * (k1[c] + 2 * k2[c] + 2 * k3[c] + k4[c]);
  }
  return y;
}

struct GLNodes {
  std::vector<qreal> x, w;  // on [0, 1], ascending
};

template <int N>
GLNodes gl_nodes_fixed() {
  using G = boost::math::quadrature::gauss<qreal, N>;
  auto& a = G::abscissa();
  auto& w = G::weights();
  std::vector<std::pair<qreal, qreal>> nodes;
  for (size_t i = 0; i < a.size(); ++i) {
    nodes.push_back({a[i], w[i]});
    if (a[i] != 0) nodes.push_back({-a[i], w[i]});
  }
  std::sort(nodes.begin(), nodes.end(), [](auto& p, auto& q) { return p.first < q.first; });
  GLNodes out;
  for (auto& [x, wt] : nodes) {
    out.x.push_back((x + 1) / 2);
    out.w.push_back(wt / 2);
  }
  return out;
}

const GLNodes& gl_nodes(int n) {
  static const std::map<int, GLNodes> table = {
      {4, gl_nodes_fixed<4>()}, {6, gl_nodes_fixed<6>()}, {8, gl_nodes_fixed<8>()},
      {10, gl_nodes_fixed<10>()}, {12, gl_nodes_fixed<12>()}, {16, gl_nodes_fixed<16>()}};
  auto it = table.find(n);
  if (it == table.end()) throw InvalidArgument("supported Gauss-Legendre node counts: 4, 6, 8, 10, 12, 16");
  return it->second;
}

// P_+ = int_0^1 {(1-x) Nhat + x R, F} o phi_x dx + (P - R) o Phi, where {G, F} is the derivative
// of G along X_F = (grad_I F, -grad_theta F).
class NextPerturbation : public Perturbation {
 public:
  NextPerturbation(PerturbationPtr prev, AffineTrig R, AffineTrig F, QVec b0, int steps, int nodes)
      : prev_(std::move(prev)), R_(std::move(R)), F_(std::move(F)), b0_(b0), steps_(steps), gl_(gl_nodes(nodes)) {}

  qreal value(const QVec& th, const QVec& I) const override {
    State y{th[0], th[1], I[0], I[1]};
    qreal x = 0, integral = 0;
    for (size_t i = 0; i < gl_.x.size(); ++i) {
      y = advance(y, gl_.x[i] - x);
      x = gl_.x[i];
      integral += gl_.w[i] * bracket(y, x);
    }
    y = advance(y, 1 - x);
    QVec T{y[0], y[1]}, J{y[2], y[3]};
    return integral + prev_->value(T, J) - R_.value(T, J);
  }
  int depth() const override { return prev_->depth() + 1; }

 private:
  State advance(const State& y, const qreal& dt) const {
    int k = std::max(1, int(std::ceil(static_cast<double>(dt) * steps_)));
    return rk4(F_, y, dt, k);
  }
  qreal bracket(const State& y, const qreal& x) const {
    QVec th{y[0], y[1]}, I{y[2], y[3]};
    qreal vR, vF;
    QVec Rth, RI, Fth, FI;
    R_.eval(th, I, vR, Rth, RI);
    F_.eval(th, I, vF, Fth, FI);
    qreal out = 0;
    for (int d = 0; d < R_.n; ++d) {
      qreal Gth = x * Rth[d];
      qreal GI = (1 - x) * b0_[d] + x * RI[d];
      out += Gth * FI[d] - GI * Fth[d];
    }
    return out;
  }

  PerturbationPtr prev_;
  AffineTrig R_, F_;
  QVec b0_;
  int steps_;
  const GLNodes& gl_;
};

AffineTrig truncate(const Hamiltonian& H, int K) {
  auto& S = H.samples();
  const int n = H.n, G = H.grid;
  auto cv = fourier(S.value, n, G);
  std::array<std::vector<qcomplex>, 2> cg;
  for (int d = 0; d < n; ++d) cg[d] = fourier(S.grad[d], n, G);
  AffineTrig R;
  R.n = n;
  for (int k0 = -K; k0 <= K; ++k0)
    for (int k1 = -K; k1 <= K; ++k1) {
      if (n == 1 && k1 != 0) continue;
      Multi k{k0, k1};
      if (l1(k) > K) continue;
      int idx = mode_index(k, n, G);
      AffineTrig::Mode m;
      m.k = k;
      m.a = cv[idx];
      m.b = {qcomplex(0), qcomplex(0)};
      for (int d = 0; d < n; ++d) m.b[d] = cg[d][idx];
      R.modes.push_back(m);
    }
  return R;
}

QVec mean_gradient(const Hamiltonian& H) {
  auto& S = H.samples();
  QVec b{0, 0};
  for (int d = 0; d < H.n; ++d) {
    qreal sum = 0;
    for (auto& v : S.grad[d]) sum += v;
    b[d] = sum / S.grad[d].size();
  }
  return b;
}

// Solves phi + grad_I R_0(phi) = omega by Newton with a central difference Jacobian.
std::vector<qreal> correct_frequency(const Hamiltonian& H, const OmegaFamily& family) {
  const int n = H.n;
  auto drift = [&](const std::vector<qreal>& phi) {
    Hamiltonian G = H;
    G.omega = phi;
    G.P = family(phi);
    return mean_gradient(G);
  };
  std::vector<qreal> phi = H.omega;
  const qreal step = qreal(1) / 1000000000000LL;
  for (int it = 0; it < 40; ++it) {
    QVec b = drift(phi);
    qreal g[2], res = 0;
    for (int d = 0; d < n; ++d) {
      g[d] = phi[d] + b[d] - H.omega[d];
      res = std::max(res, abs(g[d]));
    }
    if (res < qreal(1e-30)) return phi;
    qreal J[2][2] = {{1, 0}, {0, 1}};
    for (int e = 0; e < n; ++e) {
      auto pp = phi, pm = phi;
      pp[e] += step;
      pm[e] -= step;
      QVec bp = drift(pp), bm = drift(pm);
      for (int d = 0; d < n; ++d) J[d][e] += (bp[d] - bm[d]) / (2 * step);
    }
    if (n == 1) {
      phi[0] -= g[0] / J[0][0];
    } else {
      qreal det = J[0][0] * J[1][1] - J[0][1] * J[1][0];
      qreal d0 = (J[1][1] * g[0] - J[0][1] * g[1]) / det;
      qreal d1 = (-J[1][0] * g[0] + J[0][0] * g[1]) / det;
      phi[0] -= d0;
      phi[1] -= d1;
    }
  }
  throw NoConvergence("frequency correction did not converge");
}

std::vector<State> flow_probes(const Hamiltonian& H) {
  std::vector<State> out;
  for (int i = 0; i < 8; ++i) {
    qreal t = 2 * qpi * (qreal(i) + qreal(0.37)) / 8;
    for (double f : {0.0, 0.5}) {
      State y{t, H.n > 1 ? t * qreal(1.618) : qreal(0), qreal(f * H.r), H.n > 1 ? qreal(-f * H.r) : qreal(0)};
      out.push_back(y);
    }
  }
  return out;
}

int choose_steps(const AffineTrig& F, const Hamiltonian& H, double tol) {
  if (F.modes.empty()) return 1;
  auto probes = flow_probes(H);
  for (int N = 1; N <= (1 << 15); N *= 2) {
    qreal diff = 0, disp = 0, size = 0;
    for (auto& y : probes) {
      State a = rk4(F, y, 1, N), b = rk4(F, y, 1, 2 * N);
      for (int c = 0; c < 4; ++c) {
        diff = std::max(diff, abs(a[c] - b[c]));
        disp = std::max(disp, abs(b[c] - y[c]));
        size = std::max(size, abs(y[c]));
      }
    }
    // below the roundoff of the state itself halving cannot improve anything
    const qreal floor = 64 * std::numeric_limits<qreal>::epsilon() * (size + 1) * (2 * N);
    if (diff <= qreal(tol) * disp || diff <= floor) return 2 * N;
  }
  throw FlowStepFailure("RK4 time-one map did not settle under step halving up to 65536 steps");
}

double symplectic_defect(const AffineTrig& F, const Hamiltonian& H, int steps) {
  const qreal h = qreal(1) / 100000000;
  const int n = H.n;
  qreal worst = 0;
  for (auto& y : flow_probes(H)) {
    // columns d/dz_c of (theta, I) at time one
    qreal Jm[4][4] = {};
    int idx[4] = {0, 1, 2, 3};
    int m = 2 * n;
    if (n == 1) idx[1] = 2;
    for (int c = 0; c < m; ++c) {
      State p = y, q = y;
      p[idx[c]] += h;
      q[idx[c]] -= h;
      State a = rk4(F, p, 1, steps), b = rk4(F, q, 1, steps);
      for (int r = 0; r < m; ++r) Jm[r][c] = (a[idx[r]] - b[idx[r]]) / (2 * h);
    }
    if (n == 1) {
      worst = std::max(worst, abs(Jm[0][0] * Jm[1][1] - Jm[0][1] * Jm[1][0] - 1));
    } else {
      // J^T Omega J - Omega with Omega = [[0, -1], [1, 0]] in (theta, I) blocks
      auto omega = [](int r, int c) -> qreal {
        if (r < 2 && c == r + 2) return -1;
        if (r >= 2 && c == r - 2) return 1;
        return 0;
      };
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
          qreal s = 0;
          for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) s += Jm[i][r] * omega(i, j) * Jm[j][c];
          worst = std::max(worst, abs(s - omega(r, c)));
        }
    }
  }
  return static_cast<double>(worst);
}

nlohmann::json affine_json(const AffineTrig& T) {
  nlohmann::json arr = nlohmann::json::array();
  for (auto& m : T.modes) {
    nlohmann::json b = nlohmann::json::array();
    for (int d = 0; d < T.n; ++d) b.push_back({static_cast<double>(m.b[d].real()), static_cast<double>(m.b[d].imag())});
    arr.push_back({{"k", std::vector<int>(m.k.begin(), m.k.begin() + T.n)},
                   {"a", {static_cast<double>(m.a.real()), static_cast<double>(m.a.imag())}},
                   {"b", b}});
  }
  return arr;
}

std::vector<double> to_double(const std::vector<qreal>& v) {
  std::vector<double> out;
  for (auto& x : v) out.push_back(static_cast<double>(x));
  return out;
}

}  // namespace

std::pair<QVec, QVec> flow(const AffineTrig& F, const QVec& th, const QVec& I, qreal t, int steps) {
  State y = rk4(F, {th[0], th[1], I[0], I[1]}, t, steps);
  return {{y[0], y[1]}, {y[2], y[3]}};
}

nlohmann::json StepResult::to_json() const {
  return {{"eps", eps},
          {"eps_plus", eps_plus},
          {"bound_shape", bound_shape},
          {"measured_C", measured_C},
          {"homological_residual", homological_residual},
          {"symplectic_defect", symplectic_defect},
          {"flow_steps", flow_steps},
          {"energy_shift", static_cast<double>(energy_shift)},
          {"frequency_shift", to_double(frequency_shift)},
          {"phi", to_double(phi)},
          {"frequency_corrected", frequency_corrected},
          {"smallness", {{"a", smallness.a}, {"b", smallness.b}, {"c", smallness.c}, {"d", smallness.d}}},
          {"params",
           {{"sigma", params.sigma}, {"eta", params.eta}, {"K", params.K}, {"h", params.h},
            {"kappa", params.kappa}, {"tau", params.tau}, {"c0", params.c0}}},
          {"R", affine_json(R)},
          {"F", affine_json(F)}};
}

StepResult kam_step(const Hamiltonian& H_in, const StepParams& p, const OmegaFamily& family) {
  H_in.validate();
  if (H_in.P->depth() >= 6) throw ParameterOutOfRange("composition depth is capped at 6");
  if (p.K < 1 || p.K >= H_in.grid / 2) throw InvalidArgument("K must satisfy 1 <= K < grid / 2");
  if (!(p.sigma > 0) || !(p.eta > 0) || !(p.h > 0)) throw InvalidArgument("sigma, eta and h must be positive");

  StepResult out;
  out.params = p;
  Hamiltonian H = H_in;
  if (family) {
    H.omega = correct_frequency(H_in, family);
    H.P = family(H.omega);
    out.frequency_corrected = true;
  }
  out.phi = H.omega;
  const int n = H.n;

  // flow divisors |<omega, k>| >= kappa |k|^-tau up to K
  for (int k0 = -p.K; k0 <= p.K; ++k0)
    for (int k1 = (n == 1 ? 0 : -p.K); k1 <= (n == 1 ? 0 : p.K); ++k1) {
      Multi k{k0, k1};
      if (l1(k) == 0 || l1(k) > p.K) continue;
      qreal d = abs(H.omega[0] * k0 + (n > 1 ? H.omega[1] * k1 : qreal(0)));
      if (d < qreal(p.kappa * std::pow(double(l1(k)), -p.tau)))
        throw PreconditionViolation("frequency is not Diophantine at k = (" + std::to_string(k0) + ", " +
                                    std::to_string(k1) + ")");
    }

  out.eps = strip_norm_proxy(H, H.s, H.r);
  const double tp = p.tau + 1;
  {
    double ra = p.c0 * p.eta * H.r * std::pow(p.sigma, tp);
    double rb = p.c0 * p.h * H.r;
    double rc = 1 / (2 * std::pow(double(p.K), tp));
    double rd = std::pow(p.sigma, tp);
    out.smallness.a = (ra - out.eps) / ra;
    out.smallness.b = (rb - out.eps) / rb;
    out.smallness.c = (rc - p.h) / rc;
    out.smallness.d = (rd - 2 * p.h) / rd;
  }
  if (p.enforce_smallness && !out.smallness.ok()) throw SmallnessViolation(out.smallness.failed());

  out.R = truncate(H, p.K);
  const auto* zero = out.R.find({0, 0});
  QVec b0{0, 0};
  out.energy_shift = zero->a.real();
  for (int d = 0; d < n; ++d) b0[d] = zero->b[d].real();
  out.frequency_shift.assign(b0.begin(), b0.begin() + n);

  // F_k = R_k / (i <omega, k>), F_0 = 0
  out.F.n = n;
  qreal resid = 0;
  for (auto& m : out.R.modes) {
    if (l1(m.k) == 0) continue;
    qreal d = H.omega[0] * m.k[0] + (n > 1 ? H.omega[1] * m.k[1] : qreal(0));
    qcomplex inv(0, -1 / d);
    AffineTrig::Mode f;
    f.k = m.k;
    f.a = m.a * inv;
    f.b = {m.b[0] * inv, m.b[1] * inv};
    // derivative of N along X_F plus R - Nhat, mode k
    qcomplex ik(0, d);
    resid = std::max(resid, qabs(m.a - ik * f.a));
    for (int e = 0; e < n; ++e) resid = std::max(resid, qabs(m.b[e] - ik * f.b[e]));
    out.F.modes.push_back(f);
  }
  out.homological_residual = static_cast<double>(resid);

  out.flow_steps = choose_steps(out.F, H, p.flow_tol);
  out.symplectic_defect = out.F.modes.empty() ? 0.0 : symplectic_defect(out.F, H, out.flow_steps);

  Hamiltonian next;
  next.n = n;
  next.omega = H.omega;
  for (int d = 0; d < n; ++d) next.omega[d] += b0[d];
  next.energy = H.energy + out.energy_shift;
  next.grid = H.grid;
  next.s = H.s - 5 * p.sigma;
  next.r = p.eta * H.r;
  if (!(next.s > 0)) throw ParameterOutOfRange("strip width s - 5 sigma is not positive");
  next.P = std::make_shared<NextPerturbation>(H.P, out.R, out.F, b0, out.flow_steps, p.gl_nodes);
  out.next = next;

  out.eps_plus = strip_norm_proxy(out.next, out.next.s, out.next.r);
  out.bound_shape = out.eps * out.eps / (H.r * std::pow(p.sigma, tp)) +
                    (p.eta * p.eta + std::pow(p.sigma, -n) * std::exp(-p.K * p.sigma)) * out.eps;
  out.measured_C = out.bound_shape > 0 ? out.eps_plus / out.bound_shape : 0.0;
  return out;
}

// ---------------------------------------------------------------------------

nlohmann::json ChainReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (auto& r : rows)
    arr.push_back({{"j", r.j},
                   {"eps", r.eps},
                   {"sigma", r.sigma},
                   {"s", r.s},
                   {"r", r.r},
                   {"K", r.K},
                   {"h", r.h},
                   {"smallness", {{"a", r.smallness.a}, {"b", r.smallness.b}, {"c", r.smallness.c}, {"d", r.smallness.d}}},
                   {"homological_residual", r.homological_residual},
                   {"symplectic_defect", r.symplectic_defect},
                   {"frequency_drift", r.frequency_drift},
                   {"measured_C", r.measured_C},
                   {"flow_steps", r.flow_steps}});
  nlohmann::json j = {{"rows", arr}, {"slope_defined", slope_defined}, {"fitted_pairs", fitted_pairs}};
  j["slope"] = slope_defined ? nlohmann::json(slope) : nlohmann::json(nullptr);
  return j;
}

ChainReport kam_chain(const Hamiltonian& H0, const ChainOptions& opt) {
  if (opt.steps < 1) throw InvalidArgument("chain needs at least one step");
  ChainReport rep;
  Hamiltonian H = H0;
  double sigma = opt.sigma0, s = opt.s0, r = opt.r0;
  for (int j = 0; j < opt.steps; ++j) {
    H.s = s;
    H.r = r;
    StepParams p;
    p.sigma = sigma;
    p.eta = opt.eta;
    double L = std::log(sigma);
    p.K = std::max(1, std::min({opt.K_max, int(L * L / sigma), H.grid / 2 - 1}));
    p.h = 1 / (2 * std::pow(double(p.K), opt.tau + 1));
    p.kappa = opt.kappa;
    p.tau = opt.tau;
    p.c0 = opt.c0;
    p.enforce_smallness = opt.enforce_smallness;
    auto st = kam_step(H, p);
    ChainRow row;
    row.j = j;
    row.eps = st.eps;
    row.sigma = sigma;
    row.s = s;
    row.r = r;
    row.K = p.K;
    row.h = p.h;
    row.smallness = st.smallness;
    row.homological_residual = st.homological_residual;
    row.symplectic_defect = st.symplectic_defect;
    qreal drift = 0;
    for (auto& v : st.frequency_shift) drift = std::max(drift, abs(v));
    row.frequency_drift = static_cast<double>(drift);
    row.measured_C = st.measured_C;
    row.flow_steps = st.flow_steps;
    rep.rows.push_back(row);
    H = st.next;
    s -= 5 * sigma;
    sigma *= opt.shrink;
    r *= opt.eta;
    if (j + 1 == opt.steps) {
      ChainRow last;
      last.j = j + 1;
      last.eps = st.eps_plus;
      last.sigma = sigma;
      last.s = s;
      last.r = r;
      rep.rows.push_back(last);
    }
  }
  std::vector<double> x, y;
  const double floor = opt.roundoff_floor * rep.rows[0].eps;
  for (size_t j = 0; j + 1 < rep.rows.size(); ++j) {
    double a = rep.rows[j].eps, b = rep.rows[j + 1].eps;
    if (a > floor && b > floor) {
      x.push_back(std::log(a));
      y.push_back(std::log(b));
    }
  }
  rep.fitted_pairs = int(x.size());
  if (x.size() >= 2) {
    rep.slope = num::slope(x, y);
    rep.slope_defined = std::isfinite(rep.slope);
  }
  return rep;
}

void write_chain_csv(std::ostream& os, const ChainReport& rep) {
  auto old = os.precision(17);
  os << "j,eps,sigma,s,r,K,h,margin_a,margin_b,margin_c,margin_d,homological_residual,symplectic_defect,"
        "frequency_drift,measured_C,flow_steps\n";
  for (auto& r : rep.rows)
    os << r.j << ',' << r.eps << ',' << r.sigma << ',' << r.s << ',' << r.r << ',' << r.K << ',' << r.h << ','
       << r.smallness.a << ',' << r.smallness.b << ',' << r.smallness.c << ',' << r.smallness.d << ','
       << r.homological_residual << ',' << r.symplectic_defect << ',' << r.frequency_drift << ',' << r.measured_C
       << ',' << r.flow_steps << '\n';
  os.precision(old);
}

// ---------------------------------------------------------------------------

std::string ScheduleRow::failing() const {
  if (a < 0) return "(a)";
  if (b < 0) return "(b)";
  if (c < 0) return "(c)";
  if (d < 0) return "(d)";
  if (sigma_power < 0) return "(sigma-power)";
  if (eta_floor < 0) return "(eta-floor)";
  if (nu_sum < 0) return "(nu-sum)";
  if (!(eta_window > 0)) return "(eta-window)";
  if (domain < 0) return "(domain)";
  return "";
}

Schedule build_schedule(const ScheduleParams& P) {
  auto bad = [](const std::string& m) { throw ParameterOutOfRange(m); };
  if (P.n < 1) bad("n >= 1");
  if (!(P.tau > 0)) bad("tau > 0");
  if (!(P.vartheta0 > 0)) bad("vartheta0 > 0");
  if (!(P.vartheta > 0 && P.vartheta < std::min(P.vartheta0 / 4, 1.0))) bad("0 < vartheta < min(vartheta0 / 4, 1)");
  if (!(P.C0 >= 1)) bad("C0 >= 1");
  if (!(P.c0 > 0)) bad("c0 > 0");
  if (!(P.E0 > 0)) bad("E0 > 0");
  if (!(P.eps_hat > 0)) bad("eps_hat > 0");
  if (P.m < 0) bad("m >= 0");
  if (P.jmax < 0) bad("jmax >= 0");

  Schedule S;
  S.params = P;
  const double tp = P.tau + 1, th = P.vartheta, th0 = P.vartheta0;
  S.delta = std::pow(6 * P.C0, -1 / th);
  const double ld = std::log(S.delta);
  if (!(P.sigma0 > 0 && P.sigma0 < (1 - S.delta) / 5)) bad("0 < sigma0 < (1 - delta) / 5");
  const double Jmin = P.m * tp / th;
  S.J = P.J ? *P.J : int(std::ceil(Jmin - 1e-12));
  if (S.J < Jmin - 1e-12) bad("J(m) >= m (tau + 1) / vartheta");
  S.s0 = 5 * P.sigma0 / (1 - S.delta);
  S.eta0 = std::pow(S.delta, tp + th0);
  S.u0 = 6 * S.s0;
  S.vartheta1 = th0 - 4 * th;
  S.ell0 = 2 * tp + (P.ell0_doubled ? 2 * th0 : th0);
  S.ell_m = 2 * P.m * tp + S.ell0;
  const double log_eta0 = (tp + th0) * ld;
  if (P.strict && !(std::log(P.E0) < 2 * log_eta0)) bad("E0 < eta0^2");

  auto nu = [&](int j) { return j < S.J ? th0 - th : P.m * tp + th0 - th; };
  double sum_nu = 0;  // nu_0 + ... + nu_{j-1}
  double log_r = std::log(S.s0), log_E = std::log(P.E0);
  const double log_eps0 = std::log(P.eps_hat) + std::log(S.s0) + tp * std::log(P.sigma0) + std::log(P.E0);
  for (int j = 0; j <= P.jmax; ++j) {
    ScheduleRow R;
    R.j = j;
    R.nu = nu(j);
    const double log_sigma = std::log(P.sigma0) + j * ld;
    R.sigma = std::exp(log_sigma);
    R.s = S.s0 * std::exp(j * ld);
    R.u = S.u0 * std::exp(j * ld);
    R.log_eta = (R.nu + tp + th) * ld;
    R.log_r = log_r;
    R.log_E = log_E;
    R.log_eps = std::log(P.eps_hat) + log_r + tp * log_sigma + log_E;
    R.p = j * (tp + th) + sum_nu;
    R.q_first = R.p + j * tp + sum_nu;
    R.q = j * (2 * tp + th) + 2 * sum_nu;
    if (std::abs(R.q - R.q_first) > 1e-9 * std::max(1.0, R.q))
      throw NoConvergence("the two forms of q_j disagree");
    if (std::abs(log_eps0 + R.q * ld - R.log_eps) > 1e-9 * std::max(1.0, std::abs(R.log_eps)))
      throw NoConvergence("eps_j is inconsistent with q_j");
    const double lnsig = std::abs(log_sigma);  // |ln sigma|
    const double log_K = -log_sigma + 2 * std::log(lnsig);
    R.K = std::exp(log_K);
    R.log_h = -std::log(2.0) - tp * log_K;
    const double log_c0 = std::log(P.c0);

    R.a = log_c0 + R.log_eta + R.log_r + tp * log_sigma - R.log_eps;
    R.b = log_c0 + R.log_h + R.log_r - R.log_eps;
    R.c = (-std::log(2.0) - tp * log_K) - R.log_h;
    R.d = tp * log_sigma - std::log(2.0) - R.log_h;
    R.sigma_power = log_c0 - (std::log(2.0) + (2 * tp) * std::log(lnsig) + R.log_E);
    R.eta_floor = 2 * R.log_eta - (-P.n * log_sigma - lnsig * lnsig);
    R.nu_sum = j == 0 ? 0.0 : sum_nu - (2 * R.nu - 2 * nu(0));
    R.eta_window = std::min(2 * R.log_eta - R.log_E, std::log(1.0 / 64) - 2 * R.log_eta);
    R.domain = std::min({-std::log(R.s), -R.log_r, std::log(1.0 / 8) - R.log_eta, std::log(R.s) - std::log(5 * R.sigma),
                       log_K});
    if (S.first_failure < 0 && !R.failing().empty()) {
      S.first_failure = j;
      S.first_failure_flag = R.failing();
    }
    S.rows.push_back(R);
    // advance: r_{j+1} = eta_j r_j, E_{j+1} = delta^{nu_j} E_j
    log_r += R.log_eta;
    log_E += R.nu * ld;
    sum_nu += R.nu;
  }
  return S;
}

nlohmann::json Schedule::to_json() const {
  nlohmann::json rows_j = nlohmann::json::array();
  for (auto& r : rows)
    rows_j.push_back({{"j", r.j},
                      {"s", r.s},
                      {"sigma", r.sigma},
                      {"K", r.K},
                      {"u", r.u},
                      {"nu", r.nu},
                      {"log_eta", r.log_eta},
                      {"log_r", r.log_r},
                      {"log_E", r.log_E},
                      {"log_eps", r.log_eps},
                      {"log_h", r.log_h},
                      {"p", r.p},
                      {"q", r.q},
                      {"margins",
                       {{"a", r.a}, {"b", r.b}, {"c", r.c}, {"d", r.d}, {"sigma_power", r.sigma_power}, {"eta_floor", r.eta_floor},
                        {"nu_sum", r.nu_sum}, {"eta_window", r.eta_window}, {"domain", r.domain}}},
                      {"ok", r.failing().empty()}});
  return {{"params",
           {{"n", params.n}, {"tau", params.tau}, {"vartheta", params.vartheta}, {"vartheta0", params.vartheta0},
            {"C0", params.C0}, {"c0", params.c0}, {"sigma0", params.sigma0}, {"E0", params.E0},
            {"eps_hat", params.eps_hat}, {"m", params.m}, {"jmax", params.jmax},
            {"ell0_doubled", params.ell0_doubled}}},
          {"delta", delta},
          {"s0", s0},
          {"eta0", eta0},
          {"u0", u0},
          {"vartheta1", vartheta1},
          {"ell0", ell0},
          {"ell_m", ell_m},
          {"J", J},
          {"all_ok", all_ok()},
          {"first_failure", first_failure},
          {"first_failure_flag", first_failure_flag},
          {"rows", rows_j}};
}

void write_schedule_csv(std::ostream& os, const Schedule& s) {
  auto old = os.precision(17);
  os << "j,s,sigma,K,u,nu,log_eta,log_r,log_E,log_eps,log_h,q,a,b,c,d,sigma_power,eta_floor,nu_sum,eta_window,domain,ok\n";
  for (auto& r : s.rows)
    os << r.j << ',' << r.s << ',' << r.sigma << ',' << r.K << ',' << r.u << ',' << r.nu << ',' << r.log_eta << ','
       << r.log_r << ',' << r.log_E << ',' << r.log_eps << ',' << r.log_h << ',' << r.q << ',' << r.a << ',' << r.b
       << ',' << r.c << ',' << r.d << ',' << r.sigma_power << ',' << r.eta_floor << ',' << r.nu_sum << ',' << r.eta_window << ','
       << r.domain << ',' << (r.failing().empty() ? 1 : 0) << '\n';
  os.precision(old);
}

}  // namespace bk::kam
