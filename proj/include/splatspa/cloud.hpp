#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "splatspa/gaussian.hpp"

namespace splatspa {

/// Structure-of-arrays storage for N Gaussians. Vector-valued fields are
/// interleaved per Gaussian (mu is x0 y0 x1 y1 ..., color is r0 g0 b0 ...).
struct GaussianCloud {
  std::vector<double> mu;             // 2n
  std::vector<double> theta;          // n
  std::vector<double> log_scale;      // 2n
  std::vector<double> opacity_logit;  // n
  std::vector<double> color;          // 3n
  std::vector<double> order_key;      // n
  std::vector<std::uint8_t> alive;    // n

  GaussianCloud() = default;
  explicit GaussianCloud(std::size_t n);

  std::size_t size() const { return theta.size(); }
  bool empty() const { return theta.empty(); }
  std::size_t alive_count() const;

  Gaussian2D get(std::size_t i) const;
  void set(std::size_t i, const Gaussian2D& g);
  void push_back(const Gaussian2D& g);

  double opacity(std::size_t i) const { return sigmoid(opacity_logit[i]); }
  /// Activated opacities of every Gaussian, alive or not.
  std::vector<double> opacities() const;

  /// Keeps only the listed indices, in the given order. Throws InvalidArgument
  /// on an out-of-range index.
  void keep(std::span<const std::size_t> indices);

  /// Physically removes dead Gaussians. Returns the surviving original indices.
  std::vector<std::size_t> compact();

  /// Throws InvalidArgument if column lengths disagree.
  void validate() const;

  bool operator==(const GaussianCloud&) const = default;
};

/// Gradient columns with the same layout as the parameter columns of GaussianCloud.
struct CloudGradient {
  std::vector<double> mu;
  std::vector<double> theta;
  std::vector<double> log_scale;
  std::vector<double> opacity_logit;
  std::vector<double> color;

  CloudGradient() = default;
  explicit CloudGradient(std::size_t n)
      : mu(2 * n, 0.0), theta(n, 0.0), log_scale(2 * n, 0.0), opacity_logit(n, 0.0),
        color(3 * n, 0.0) {}

  std::size_t size() const { return theta.size(); }
};

// Compacts a per-Gaussian column with `stride` entries per Gaussian.
template <typename T>
std::vector<T> gather_rows(const std::vector<T>& column, std::size_t stride,
                           std::span<const std::size_t> indices) {
  std::vector<T> out;
  out.reserve(indices.size() * stride);
  for (std::size_t idx : indices) {
    for (std::size_t k = 0; k < stride; ++k) out.push_back(column[idx * stride + k]);
  }
  return out;
}

}  // namespace splatspa
