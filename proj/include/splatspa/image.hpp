#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace splatspa {

/// Row-major H x W x 3 image of doubles.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * 3 + c;
  }
  double& at(int x, int y, int c) { return data[index(x, y, c)]; }
  double at(int x, int y, int c) const { return data[index(x, y, c)]; }

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  bool same_shape(const Image& o) const { return width == o.width && height == o.height; }

  bool operator==(const Image&) const = default;
};

/// Throws InvalidArgument naming `what` when the shapes differ.
void require_same_shape(const Image& a, const Image& b, const char* what);

/// Deterministic test scene: soft colored blobs over a shaded gradient, a
/// large disc, small hard-edged ellipses and a striped texture. Values in [0, 1].
Image synthetic_scene(int width, int height, std::uint64_t seed);

}  // namespace splatspa
