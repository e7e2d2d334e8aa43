#pragma once

#include "splatspa/image.hpp"

namespace splatspa {

struct LossConfig {
  double rho = 0.2;  // weight of the D-SSIM term
  int ssim_window = 11;
  double ssim_sigma = 1.5;
  double ssim_c1 = 0.01 * 0.01;
  double ssim_c2 = 0.03 * 0.03;

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

struct LossResult {
  double value = 0.0;
  Image grad;  // d loss / d pred
};

/// (1 - rho) * mean|pred - gt| + rho * (1 - SSIM) / 2, with its gradient.
LossResult loss(const Image& pred, const Image& gt, const LossConfig& cfg = {});

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) for peak 1.0; kPsnrCap when MSE < 1e-12.
double psnr(const Image& pred, const Image& gt);

double mse(const Image& pred, const Image& gt);

/// Mean local SSIM over every pixel and channel. Windows are Gaussian
/// weighted and zero padded at the borders (same-size filtering).
double ssim(const Image& pred, const Image& gt, const LossConfig& cfg = {});

struct SsimResult {
  double value = 0.0;
  Image grad;  // d mean-SSIM / d pred
};

SsimResult ssim_with_grad(const Image& pred, const Image& gt, const LossConfig& cfg = {});

/// Normalized 1D Gaussian window used for SSIM.
std::vector<double> ssim_kernel(int size, double sigma);

}  // namespace splatspa
