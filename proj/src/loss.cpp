#include "splatspa/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "splatspa/errors.hpp"

namespace splatspa {

namespace {

using Plane = std::vector<double>;

Plane channel(const Image& img, int c) {
  Plane p(img.pixel_count());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = img.data[i * 3 + c];
  return p;
}

// Separable Gaussian filter, zero padded, same output size. The kernel is
// symmetric so this operator is its own adjoint.
Plane blur(const Plane& in, int w, int h, const std::vector<double>& k) {
  const int r = static_cast<int>(k.size()) / 2;
  Plane tmp(in.size()), out(in.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    const double* row = in.data() + static_cast<std::size_t>(y) * w;
    double* dst = tmp.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      const int lo = std::max(-r, -x), hi = std::min(r, w - 1 - x);
      double acc = 0.0;
      for (int i = lo; i <= hi; ++i) acc += k[i + r] * row[x + i];
      dst[x] = acc;
    }
  }
  // Vertical pass row by row so the inner loop runs over contiguous memory.
  for (int y = 0; y < h; ++y) {
    double* dst = out.data() + static_cast<std::size_t>(y) * w;
    const int lo = std::max(-r, -y), hi = std::min(r, h - 1 - y);
    for (int j = lo; j <= hi; ++j) {
      const double kj = k[j + r];
      const double* src = tmp.data() + static_cast<std::size_t>(y + j) * w;
      for (int x = 0; x < w; ++x) dst[x] += kj * src[x];
    }
  }
  return out;
}

SsimResult ssim_impl(const Image& x, const Image& y, const LossConfig& cfg, bool want_grad) {
  require_same_shape(x, y, "ssim");
  cfg.validate();
  const int w = x.width, h = x.height;
  const auto k = ssim_kernel(cfg.ssim_window, cfg.ssim_sigma);
  const double c1 = cfg.ssim_c1, c2 = cfg.ssim_c2;
  const double inv_m = 1.0 / static_cast<double>(x.data.size());

  SsimResult res;
  if (want_grad) res.grad = Image(w, h);
  double total = 0.0;

  for (int c = 0; c < 3; ++c) {
    const Plane px = channel(x, c);
    const Plane py = channel(y, c);
    Plane xx(px.size()), yy(px.size()), xy(px.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
      xx[i] = px[i] * px[i];
      yy[i] = py[i] * py[i];
      xy[i] = px[i] * py[i];
    }
    const Plane mu_x = blur(px, w, h, k);
    const Plane mu_y = blur(py, w, h, k);
    const Plane e_xx = blur(xx, w, h, k);
    const Plane e_yy = blur(yy, w, h, k);
    const Plane e_xy = blur(xy, w, h, k);

    Plane d_mu(px.size()), d_exx(px.size()), d_exy(px.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
      const double mx = mu_x[i], my = mu_y[i];
      const double var_x = e_xx[i] - mx * mx;
      const double var_y = e_yy[i] - my * my;
      const double cov = e_xy[i] - mx * my;
      const double n1 = 2.0 * mx * my + c1;
      const double n2 = 2.0 * cov + c2;
      const double d1 = mx * mx + my * my + c1;
      const double d2 = var_x + var_y + c2;
      const double s = (n1 * n2) / (d1 * d2);
      total += s;
      if (want_grad) {
        d_mu[i] = inv_m * ((2.0 * my * n2 - 2.0 * my * n1) / (d1 * d2) - s * (2.0 * mx / d1 - 2.0 * mx / d2));
        d_exx[i] = inv_m * (-s / d2);
        d_exy[i] = inv_m * (2.0 * n1 / (d1 * d2));
      }
    }
    if (want_grad) {
      const Plane g_mu = blur(d_mu, w, h, k);
      const Plane g_xx = blur(d_exx, w, h, k);
      const Plane g_xy = blur(d_exy, w, h, k);
      for (std::size_t i = 0; i < px.size(); ++i) {
        res.grad.data[i * 3 + c] = g_mu[i] + 2.0 * px[i] * g_xx[i] + py[i] * g_xy[i];
      }
    }
  }
  res.value = total / static_cast<double>(x.data.size());
  return res;
}

}  // namespace

void LossConfig::validate() const {
  if (!(rho >= 0.0 && rho <= 1.0)) throw InvalidArgument("loss: rho must lie in [0, 1]");
  if (ssim_window < 3 || ssim_window % 2 == 0) {
    throw InvalidArgument("loss: ssim_window must be odd and >= 3, got " + std::to_string(ssim_window));
  }
  if (!(ssim_sigma > 0.0)) throw InvalidArgument("loss: ssim_sigma must be positive");
  if (!(ssim_c1 > 0.0 && ssim_c2 > 0.0)) throw InvalidArgument("loss: SSIM constants must be positive");
}

std::vector<double> ssim_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const int r = size / 2;
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += k[i + r];
  }
  for (double& v : k) v /= sum;
  return k;
}

double mse(const Image& pred, const Image& gt) {
  require_same_shape(pred, gt, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = pred.data[i] - gt.data[i];
    acc += d * d;
  }
  return pred.data.empty() ? 0.0 : acc / static_cast<double>(pred.data.size());
}

double psnr(const Image& pred, const Image& gt) {
  const double e = mse(pred, gt);
  if (e < 1e-12) return kPsnrCap;
  return 10.0 * std::log10(1.0 / e);
}

double ssim(const Image& pred, const Image& gt, const LossConfig& cfg) {
  return ssim_impl(pred, gt, cfg, false).value;
}

SsimResult ssim_with_grad(const Image& pred, const Image& gt, const LossConfig& cfg) {
  return ssim_impl(pred, gt, cfg, true);
}

LossResult loss(const Image& pred, const Image& gt, const LossConfig& cfg) {
  require_same_shape(pred, gt, "loss");
  cfg.validate();
  const std::size_t m = pred.data.size();
  LossResult out;
  out.grad = Image(pred.width, pred.height);
  if (m == 0) return out;
  const double inv_m = 1.0 / static_cast<double>(m);

  double l1 = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double d = pred.data[i] - gt.data[i];
    l1 += std::abs(d);
    out.grad.data[i] = d > 0.0 ? (1.0 - cfg.rho) * inv_m : (d < 0.0 ? -(1.0 - cfg.rho) * inv_m : 0.0);
  }
  l1 *= inv_m;

  if (cfg.rho == 0.0) {
    out.value = l1;
    return out;
  }
  const SsimResult s = ssim_with_grad(pred, gt, cfg);
  out.value = (1.0 - cfg.rho) * l1 + cfg.rho * 0.5 * (1.0 - s.value);
  for (std::size_t i = 0; i < m; ++i) out.grad.data[i] -= 0.5 * cfg.rho * s.grad.data[i];
  return out;
}

}  // namespace splatspa
