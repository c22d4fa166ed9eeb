#pragma once
#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

namespace bk {

using Vec2 = Eigen::Vector2d;

// Support function H(theta) = a0 + sum_k (a_k cos k theta + b_k sin k theta).
struct SupportCoeffs {
  double a0 = 1.0;
  std::vector<double> cos_coef;  // k = 1, 2, ...
  std::vector<double> sin_coef;
};

struct Frame {
  Vec2 pos;
  Vec2 tangent;
  Vec2 normal;  // inward
  double kappa;
};

// Strictly convex closed curve parametrized by the outward normal angle theta.
// Immutable after construction.
class BoundaryCurve {
 public:
  enum class Kind { ellipse, support };

  static BoundaryCurve ellipse(double a, double b, int grid = 4096);
  static BoundaryCurve support(const SupportCoeffs& c, int grid = 4096);

  Kind kind() const { return kind_; }
  double a() const { return a_; }
  double b() const { return b_; }
  const SupportCoeffs& coeffs() const { return coeffs_; }
  int grid() const { return grid_; }
  double perimeter() const { return perimeter_; }

  // Support function and its first two theta derivatives.
  double H(double theta) const;
  double dH(double theta) const;
  // Radius of curvature H + H''.
  double rho(double theta) const;
  double drho(double theta) const;

  Vec2 position_at(double theta) const;
  // Arclength from theta = 0, monotone, s(2 pi) = L.
  double s_of_theta(double theta) const;
  // Inverse of s_of_theta on [0, L), reduced mod L.
  double theta_of_s(double s) const;

  Frame frame(double s) const;
  Frame frame_theta(double theta) const;
  double kappa(double s) const;
  // Arclength derivative of the curvature.
  double dkappa(double s) const;

  // Curve dilated by lambda.
  BoundaryCurve scaled(double lambda) const;

  nlohmann::json to_json() const;
  static BoundaryCurve from_json(const nlohmann::json& j);

 private:
  BoundaryCurve() = default;
  void build();
  double s_closed(double theta) const;  // closed form for support series, any theta

  Kind kind_ = Kind::support;
  double a_ = 1.0, b_ = 1.0;
  SupportCoeffs coeffs_;
  int grid_ = 4096;
  double perimeter_ = 0.0;
  std::shared_ptr<const std::vector<double>> s_table_;  // s at theta_j = 2 pi j / grid
  struct Interp;
  std::shared_ptr<const Interp> interp_;
};

}  // namespace bk
