#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "splatspa/cloud.hpp"
#include "splatspa/image.hpp"

namespace test_support {

inline splatspa::Image random_image(int w, int h, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  splatspa::Image img(w, h);
  for (double& v : img.data) v = u(rng);
  return img;
}

// Gaussians with moderate size scattered over a w x h image.
inline splatspa::GaussianCloud random_cloud(std::size_t n, int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  splatspa::GaussianCloud cloud;
  for (std::size_t i = 0; i < n; ++i) {
    splatspa::Gaussian2D g;
    g.mu = {w * (0.2 + 0.6 * u(rng)), h * (0.2 + 0.6 * u(rng))};
    g.theta = 3.0 * u(rng);
    g.log_scale = {std::log(1.5 + 2.5 * u(rng)), std::log(1.5 + 2.5 * u(rng))};
    g.opacity_logit = -1.0 + 2.5 * u(rng);
    g.color = {u(rng), u(rng), u(rng)};
    g.order_key = u(rng);
    cloud.push_back(g);
  }
  return cloud;
}

inline double rel_err(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("splatspa_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace test_support
