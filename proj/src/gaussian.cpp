#include "splatspa/gaussian.hpp"

#include "splatspa/errors.hpp"

namespace splatspa {

namespace {

void require_finite(double theta, const LogScale& log_scale) {
  if (!std::isfinite(theta) || !std::isfinite(log_scale[0]) || !std::isfinite(log_scale[1])) {
    throw InvalidParameter("gaussian shape parameters must be finite");
  }
}

// Rotating diag(d0, d1) by theta.
Sym2 rotate_diagonal(double theta, double d0, double d1) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return Sym2{c * c * d0 + s * s * d1, c * s * (d0 - d1), s * s * d0 + c * c * d1};
}

}  // namespace

Sym2 build_covariance(double theta, const LogScale& log_scale) {
  require_finite(theta, log_scale);
  return rotate_diagonal(theta, std::exp(2.0 * log_scale[0]), std::exp(2.0 * log_scale[1]));
}

Sym2 build_precision(double theta, const LogScale& log_scale) {
  require_finite(theta, log_scale);
  return rotate_diagonal(theta, std::exp(-2.0 * log_scale[0]), std::exp(-2.0 * log_scale[1]));
}

double eval_gaussian(const Gaussian2D& g, Vec2 x) {
  const Sym2 p = build_precision(g.theta, g.log_scale);
  return std::exp(-0.5 * mahalanobis_sq(p, x.x - g.mu.x, x.y - g.mu.y));
}

DensityGradient eval_gaussian_grad(const Gaussian2D& g, Vec2 x) {
  const Sym2 p = build_precision(g.theta, g.log_scale);
  const double dx = x.x - g.mu.x;
  const double dy = x.y - g.mu.y;
  const double value = std::exp(-0.5 * mahalanobis_sq(p, dx, dy));

  DensityGradient out;
  out.value = value;
  out.d_mu = {value * (p.xx * dx + p.xy * dy), value * (p.xy * dx + p.yy * dy)};
  const Sym2 d_prec{-0.5 * value * dx * dx, -value * dx * dy, -0.5 * value * dy * dy};
  const ShapeGradient shape = precision_to_shape_grad(g.theta, g.log_scale, d_prec);
  out.d_theta = shape.d_theta;
  out.d_log_scale = shape.d_log_scale;
  return out;
}

ShapeGradient precision_to_shape_grad(double theta, const LogScale& log_scale,
                                      const Sym2& d_prec) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double p0 = std::exp(-2.0 * log_scale[0]);
  const double p1 = std::exp(-2.0 * log_scale[1]);
  const double cs = c * s;

  // A = c^2 p0 + s^2 p1, B = cs (p0 - p1), C = s^2 p0 + c^2 p1
  ShapeGradient out;
  out.d_theta = d_prec.xx * 2.0 * cs * (p1 - p0) + d_prec.xy * (c * c - s * s) * (p0 - p1) +
                d_prec.yy * 2.0 * cs * (p0 - p1);
  out.d_log_scale[0] = -2.0 * p0 * (d_prec.xx * c * c + d_prec.xy * cs + d_prec.yy * s * s);
  out.d_log_scale[1] = -2.0 * p1 * (d_prec.xx * s * s - d_prec.xy * cs + d_prec.yy * c * c);
  return out;
}

}  // namespace splatspa
