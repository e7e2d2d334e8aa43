#pragma once

#include <array>
#include <cmath>

namespace splatspa {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

// Symmetric 2x2 matrix [[xx, xy], [xy, yy]].
struct Sym2 {
  double xx = 0.0;
  double xy = 0.0;
  double yy = 0.0;

  double det() const { return xx * yy - xy * xy; }
};

using LogScale = std::array<double, 2>;
using Rgb = std::array<double, 3>;

/// One anisotropic Gaussian living directly in image-plane pixel coordinates.
/// Opacity is stored as a logit; the activated opacity is sigmoid(opacity_logit).
struct Gaussian2D {
  Vec2 mu;
  double theta = 0.0;
  LogScale log_scale{0.0, 0.0};
  double opacity_logit = 0.0;
  Rgb color{0.0, 0.0, 0.0};
  double order_key = 0.0;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double sigmoid_derivative(double x) {
  const double s = sigmoid(x);
  return s * (1.0 - s);
}
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Sigma = R S S^T R^T with R the rotation by theta and S = diag(exp(log_scale)).
/// Throws InvalidParameter on non-finite input.
Sym2 build_covariance(double theta, const LogScale& log_scale);

/// Sigma^-1 in closed form, R diag(exp(-2 log_scale)) R^T.
Sym2 build_precision(double theta, const LogScale& log_scale);

/// Squared Mahalanobis distance of `offset` under precision matrix `p`.
inline double mahalanobis_sq(const Sym2& p, double dx, double dy) {
  return p.xx * dx * dx + 2.0 * p.xy * dx * dy + p.yy * dy * dy;
}

/// exp(-0.5 * d^2), no cutoff.
double eval_gaussian(const Gaussian2D& g, Vec2 x);

struct DensityGradient {
  double value = 0.0;
  Vec2 d_mu;
  double d_theta = 0.0;
  LogScale d_log_scale{0.0, 0.0};
};

DensityGradient eval_gaussian_grad(const Gaussian2D& g, Vec2 x);

struct ShapeGradient {
  double d_theta = 0.0;
  LogScale d_log_scale{0.0, 0.0};
};

// Chains d/d(precision entries) into d/d(theta, log_scale). `d_prec.xy` is the
// derivative w.r.t. the single off-diagonal parameter (appearing twice in the
// quadratic form).
ShapeGradient precision_to_shape_grad(double theta, const LogScale& log_scale,
                                      const Sym2& d_prec);

}  // namespace splatspa
