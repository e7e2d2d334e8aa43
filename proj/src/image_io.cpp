#include "splatspa/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "splatspa/checkpoint.hpp"
#include "splatspa/errors.hpp"

namespace splatspa {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Image read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open '" + path.string() + "' for reading");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialization failed");
  }
  std::vector<png_byte> pixels;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw UnsupportedFormat("'" + path.string() + "' is not a readable PNG");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (depth == 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw UnsupportedFormat("'" + path.string() + "' is a 16-bit PNG; only 8-bit is supported");
  }
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const std::size_t rowbytes = png_get_rowbytes(png, info);
  if (rowbytes != static_cast<std::size_t>(width) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw UnsupportedFormat("'" + path.string() + "': unexpected PNG layout");
  }
  pixels.resize(rowbytes * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(static_cast<int>(width), static_cast<int>(height));
  for (std::size_t i = 0; i < pixels.size(); ++i) img.data[i] = pixels[i] / 255.0;
  return img;
}

void write_png(const Image& image, const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot open '" + path.string() + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed");
  }
  std::vector<png_byte> pixels(image.data.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = quantize(image.data[i]);
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
  for (int y = 0; y < image.height; ++y) rows[y] = pixels.data() + static_cast<std::size_t>(y) * image.width * 3;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding of '" + path.string() + "' failed");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_ppm(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  // Header tokens: P6 width height maxval, separated by whitespace, '#' comments allowed.
  std::size_t pos = 2;
  auto next_token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(static_cast<char>(bytes[pos++]));
    return tok;
  };
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(next_token());
    height = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw UnsupportedFormat("'" + path.string() + "': malformed PPM header");
  }
  if (maxval != 255) throw UnsupportedFormat("'" + path.string() + "': only 8-bit PPM (maxval 255) is supported");
  if (width < 1 || height < 1) throw UnsupportedFormat("'" + path.string() + "': bad PPM dimensions");
  ++pos;  // single whitespace before raster
  const std::size_t need = static_cast<std::size_t>(width) * height * 3;
  if (bytes.size() < pos + need) throw IoError("'" + path.string() + "': truncated PPM raster");
  Image img(width, height);
  for (std::size_t i = 0; i < need; ++i) img.data[i] = bytes[pos + i] / 255.0;
  return img;
}

void write_ppm(const Image& image, const std::filesystem::path& path) {
  const std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (double v : image.data) out.push_back(quantize(v));
  write_file_bytes(path, out);
}

}  // namespace

std::uint8_t quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

Image read_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("image '" + path.string() + "' does not exist");
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  static constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0) return read_png(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return read_ppm(bytes, path);
  throw UnsupportedFormat("'" + path.string() + "' is neither PNG nor binary PPM");
}

void write_image(const Image& image, const std::filesystem::path& path) {
  if (image.width < 1 || image.height < 1) throw InvalidArgument("write_image: empty image");
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".ppm") {
    write_ppm(image, path);
  } else {
    write_png(image, path);
  }
}

}  // namespace splatspa
