#pragma once

#include <cstdint>
#include <filesystem>

#include "splatspa/image.hpp"

namespace splatspa {

/// Reads an 8-bit PNG (gray, RGB, palette; alpha dropped) or binary PPM (P6,
/// maxval 255), mapping channel values to [0, 1] by /255.
Image read_image(const std::filesystem::path& path);

/// Writes PNG, or PPM when the extension is .ppm. Channels are quantized
/// round-half-up after clamping to [0, 1].
void write_image(const Image& image, const std::filesystem::path& path);

std::uint8_t quantize(double v);

}  // namespace splatspa
