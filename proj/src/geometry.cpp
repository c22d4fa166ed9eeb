#include "bkam/geometry.hpp"

#include <cmath>
using std::isnan;
#include <boost/math/interpolators/pchip.hpp>

#include "bkam/errors.hpp"
#include "bkam/numerics.hpp"

namespace bk {

using num::pi;
using num::two_pi;

struct BoundaryCurve::Interp {
  boost::math::interpolators::pchip<std::vector<double>> theta_of_s;
};

BoundaryCurve BoundaryCurve::ellipse(double a, double b, int grid) {
  if (!(b > 0.0) || !(a > 0.0)) throw InvalidArgument("ellipse axes must be positive");
  if (a < b) throw InvalidArgument("ellipse requires a >= b");
  if (grid < 16) throw InvalidArgument("grid too small");
  BoundaryCurve c;
  c.kind_ = Kind::ellipse;
  c.a_ = a;
  c.b_ = b;
  c.grid_ = grid;
  c.build();
  return c;
}

BoundaryCurve BoundaryCurve::support(const SupportCoeffs& coeffs, int grid) {
  if (grid < 16) throw InvalidArgument("grid too small");
  BoundaryCurve c;
  c.kind_ = Kind::support;
  c.coeffs_ = coeffs;
  c.coeffs_.sin_coef.resize(std::max(coeffs.cos_coef.size(), coeffs.sin_coef.size()), 0.0);
  c.coeffs_.cos_coef.resize(c.coeffs_.sin_coef.size(), 0.0);
  c.grid_ = grid;
  // dense convexity scan, first failure reported
  const int m = 8 * grid;
  for (int j = 0; j < m; ++j) {
    double th = two_pi * j / m;
    if (!(c.rho(th) > 0.0))
      throw ConvexityViolation("H + H'' <= 0 at theta = " + std::to_string(th));
  }
  c.build();
  return c;
}

double BoundaryCurve::H(double th) const {
  if (kind_ == Kind::ellipse) {
    double ct = std::cos(th), st = std::sin(th);
    return std::sqrt(a_ * a_ * ct * ct + b_ * b_ * st * st);
  }
  double h = coeffs_.a0;
  for (size_t i = 0; i < coeffs_.cos_coef.size(); ++i) {
    double k = double(i + 1);
    h += coeffs_.cos_coef[i] * std::cos(k * th) + coeffs_.sin_coef[i] * std::sin(k * th);
  }
  return h;
}

double BoundaryCurve::dH(double th) const {
  if (kind_ == Kind::ellipse) {
    double ct = std::cos(th), st = std::sin(th);
    return (b_ * b_ - a_ * a_) * st * ct / H(th);
  }
  double h = 0.0;
  for (size_t i = 0; i < coeffs_.cos_coef.size(); ++i) {
    double k = double(i + 1);
    h += k * (-coeffs_.cos_coef[i] * std::sin(k * th) + coeffs_.sin_coef[i] * std::cos(k * th));
  }
  return h;
}

double BoundaryCurve::rho(double th) const {
  if (kind_ == Kind::ellipse) {
    double h = H(th);
    return a_ * a_ * b_ * b_ / (h * h * h);
  }
  double r = coeffs_.a0;
  for (size_t i = 0; i < coeffs_.cos_coef.size(); ++i) {
    double k = double(i + 1);
    r += (1.0 - k * k) * (coeffs_.cos_coef[i] * std::cos(k * th) + coeffs_.sin_coef[i] * std::sin(k * th));
  }
  return r;
}

double BoundaryCurve::drho(double th) const {
  if (kind_ == Kind::ellipse) {
    double h = H(th);
    return -3.0 * a_ * a_ * b_ * b_ * dH(th) / (h * h * h * h);
  }
  double r = 0.0;
  for (size_t i = 0; i < coeffs_.cos_coef.size(); ++i) {
    double k = double(i + 1);
    r += (1.0 - k * k) * k * (-coeffs_.cos_coef[i] * std::sin(k * th) + coeffs_.sin_coef[i] * std::cos(k * th));
  }
  return r;
}

Vec2 BoundaryCurve::position_at(double th) const {
  double ct = std::cos(th), st = std::sin(th);
  if (kind_ == Kind::ellipse) {
    double h = H(th);
    return Vec2(a_ * a_ * ct / h, b_ * b_ * st / h);
  }
  double h = H(th), hp = dH(th);
  return Vec2(h * ct - hp * st, h * st + hp * ct);
}

double BoundaryCurve::s_closed(double th) const {
  double s = coeffs_.a0 * th;
  for (size_t i = 0; i < coeffs_.cos_coef.size(); ++i) {
    double k = double(i + 1);
    s += (1.0 - k * k) / k *
         (coeffs_.cos_coef[i] * std::sin(k * th) - coeffs_.sin_coef[i] * (std::cos(k * th) - 1.0));
  }
  return s;
}

void BoundaryCurve::build() {
  auto table = std::make_shared<std::vector<double>>(grid_ + 1);
  const auto& gl = num::gauss_legendre(12);
  const double dth = two_pi / grid_;
  (*table)[0] = 0.0;
  for (int j = 0; j < grid_; ++j) {
    double t0 = j * dth, acc = 0.0;
    if (kind_ == Kind::support) {
      (*table)[j + 1] = s_closed(t0 + dth);
      continue;
    }
    for (size_t q = 0; q < gl.x.size(); ++q) acc += gl.w[q] * rho(t0 + gl.x[q] * dth);
    (*table)[j + 1] = (*table)[j] + acc * dth;
  }
  perimeter_ = (*table)[grid_];
  for (int j = 1; j <= grid_; ++j)
    if (!((*table)[j] > (*table)[j - 1])) throw ConvexityViolation("arclength table not increasing");
  std::vector<double> xs(table->begin(), table->end());
  std::vector<double> ys(grid_ + 1);
  for (int j = 0; j <= grid_; ++j) ys[j] = j * dth;
  s_table_ = table;
  interp_ = std::make_shared<Interp>(Interp{{std::move(xs), std::move(ys)}});
}

double BoundaryCurve::s_of_theta(double th) const {
  double turns = std::floor(th / two_pi);
  double t = th - turns * two_pi;
  if (kind_ == Kind::support) return s_closed(t) + turns * perimeter_;
  const double dth = two_pi / grid_;
  int j = std::min(grid_ - 1, std::max(0, int(t / dth)));
  double t0 = j * dth, w = t - t0, acc = 0.0;
  const auto& gl = num::gauss_legendre(10);
  for (size_t q = 0; q < gl.x.size(); ++q) acc += gl.w[q] * rho(t0 + gl.x[q] * w);
  return (*s_table_)[j] + acc * w + turns * perimeter_;
}

double BoundaryCurve::theta_of_s(double s) const {
  double sr = num::wrap(s, perimeter_);
  double th = interp_->theta_of_s(sr);
  for (int it = 0; it < 6; ++it) {
    double d = (s_of_theta(th) - sr) / rho(th);
    th -= d;
    if (std::abs(d) < 1e-16) break;
  }
  return th;
}

Frame BoundaryCurve::frame_theta(double th) const {
  Frame f;
  double ct = std::cos(th), st = std::sin(th);
  f.pos = position_at(th);
  f.tangent = Vec2(-st, ct);
  f.normal = Vec2(-ct, -st);
  f.kappa = 1.0 / rho(th);
  return f;
}

Frame BoundaryCurve::frame(double s) const { return frame_theta(theta_of_s(s)); }

double BoundaryCurve::kappa(double s) const { return 1.0 / rho(theta_of_s(s)); }

double BoundaryCurve::dkappa(double s) const {
  double th = theta_of_s(s);
  double r = rho(th);
  return -drho(th) / (r * r * r);
}

BoundaryCurve BoundaryCurve::scaled(double lambda) const {
  if (!(lambda > 0.0)) throw InvalidArgument("dilation factor must be positive");
  if (kind_ == Kind::ellipse) return ellipse(lambda * a_, lambda * b_, grid_);
  SupportCoeffs c = coeffs_;
  c.a0 *= lambda;
  for (double& v : c.cos_coef) v *= lambda;
  for (double& v : c.sin_coef) v *= lambda;
  return support(c, grid_);
}

nlohmann::json BoundaryCurve::to_json() const {
  nlohmann::json j;
  if (kind_ == Kind::ellipse) {
    j["kind"] = "ellipse";
    j["a"] = a_;
    j["b"] = b_;
  } else {
    j["kind"] = "support";
    j["a0"] = coeffs_.a0;
    j["cos"] = coeffs_.cos_coef;
    j["sin"] = coeffs_.sin_coef;
  }
  j["grid"] = grid_;
  return j;
}

BoundaryCurve BoundaryCurve::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind")) throw InvalidArgument("curve document needs a kind");
  int grid = j.value("grid", 4096);
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "ellipse") return ellipse(j.at("a").get<double>(), j.at("b").get<double>(), grid);
  if (kind == "support") {
    SupportCoeffs c;
    c.a0 = j.at("a0").get<double>();
    if (j.contains("cos")) c.cos_coef = j.at("cos").get<std::vector<double>>();
    if (j.contains("sin")) c.sin_coef = j.at("sin").get<std::vector<double>>();
    return support(c, grid);
  }
  throw InvalidArgument("unknown curve kind '" + kind + "'");
}

}  // namespace bk
