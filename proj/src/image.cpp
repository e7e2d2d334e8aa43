#include "splatspa/image.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "splatspa/errors.hpp"

namespace splatspa {

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b) || a.data.size() != b.data.size()) {
    throw InvalidArgument(std::string(what) + ": image shape mismatch (" + std::to_string(a.width) + "x" +
                          std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                          std::to_string(b.height) + ")");
  }
}

Image synthetic_scene(int width, int height, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  struct Blob {
    double cx, cy, sx, sy, angle, weight;
    double rgb[3];
  };
  std::vector<Blob> blobs(7);
  for (auto& b : blobs) {
    b.cx = unit(rng);
    b.cy = unit(rng);
    b.sx = 0.06 + 0.16 * unit(rng);
    b.sy = 0.06 + 0.16 * unit(rng);
    b.angle = 3.14159265358979 * unit(rng);
    b.weight = 0.5 + 0.5 * unit(rng);
    for (double& c : b.rgb) c = unit(rng);
  }
  const double base0[3] = {0.2 + 0.3 * unit(rng), 0.2 + 0.3 * unit(rng), 0.3 + 0.3 * unit(rng)};
  const double base1[3] = {0.5 + 0.3 * unit(rng), 0.4 + 0.3 * unit(rng), 0.2 + 0.3 * unit(rng)};
  const double disc_x = 0.25 + 0.5 * unit(rng);
  const double disc_y = 0.25 + 0.5 * unit(rng);
  const double disc_r = 0.12 + 0.08 * unit(rng);
  const double disc_rgb[3] = {unit(rng), unit(rng), unit(rng)};
  // fine detail: small hard-edged ellipses
  std::vector<Blob> specks(40);
  for (auto& b : specks) {
    b.cx = unit(rng);
    b.cy = unit(rng);
    b.sx = 0.02 + 0.06 * unit(rng);
    b.sy = 0.02 + 0.06 * unit(rng);
    b.angle = 3.14159265358979 * unit(rng);
    b.weight = 0.6 + 0.4 * unit(rng);
    for (double& c : b.rgb) c = unit(rng);
  }

  Image img(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = (x + 0.5) / width;
      const double v = (y + 0.5) / height;
      const double t = 0.5 * (u + v);
      double rgb[3];
      for (int c = 0; c < 3; ++c) rgb[c] = base0[c] * (1.0 - t) + base1[c] * t;
      for (const auto& b : blobs) {
        const double ca = std::cos(b.angle), sa = std::sin(b.angle);
        const double du = u - b.cx, dv = v - b.cy;
        const double ru = (ca * du + sa * dv) / b.sx;
        const double rv = (-sa * du + ca * dv) / b.sy;
        const double w = b.weight * std::exp(-0.5 * (ru * ru + rv * rv));
        for (int c = 0; c < 3; ++c) rgb[c] = rgb[c] * (1.0 - w) + b.rgb[c] * w;
      }
      for (const auto& b : specks) {
        const double ca = std::cos(b.angle), sa = std::sin(b.angle);
        const double du = u - b.cx, dv = v - b.cy;
        const double ru = (ca * du + sa * dv) / b.sx;
        const double rv = (-sa * du + ca * dv) / b.sy;
        // edge about one pixel wide
        const double edge_px = std::min(b.sx, b.sy) * width;
        const double w = b.weight / (1.0 + std::exp((std::hypot(ru, rv) - 1.0) * edge_px * 2.0));
        for (int c = 0; c < 3; ++c) rgb[c] = rgb[c] * (1.0 - w) + b.rgb[c] * w;
      }
      // soft-edged disc
      const double dist = std::hypot(u - disc_x, v - disc_y);
      const double edge = 1.0 / (1.0 + std::exp((dist - disc_r) * width * 2.0));
      for (int c = 0; c < 3; ++c) rgb[c] = rgb[c] * (1.0 - 0.8 * edge) + disc_rgb[c] * 0.8 * edge;
      // ripple plus a finer texture
      const double ripple = 0.04 * std::sin(9.0 * u + 5.0 * v) + 0.03 * std::sin(47.0 * u - 29.0 * v);
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = std::clamp(rgb[c] + ripple, 0.0, 1.0);
    }
  }
  return img;
}

}  // namespace splatspa
