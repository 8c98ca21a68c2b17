#include "magicvo/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "magicvo/errors.hpp"

namespace magicvo {

namespace {

// Source coordinate and blend weight for corner-aligned sampling.
struct Tap {
  std::size_t lo, hi;
  double frac;
};

std::vector<Tap> taps(std::size_t src, std::size_t dst) {
  std::vector<Tap> out(dst);
  for (std::size_t i = 0; i < dst; ++i) {
    const double pos = dst == 1 ? 0.0
                                : static_cast<double>(i) * static_cast<double>(src - 1) /
                                      static_cast<double>(dst - 1);
    const auto lo = std::min(static_cast<std::size_t>(std::floor(pos)), src - 1);
    const std::size_t hi = std::min(lo + 1, src - 1);
    out[i] = {lo, hi, pos - static_cast<double>(lo)};
  }
  return out;
}

}  // namespace

Image resize_bilinear(const Image& src, std::size_t dst_width, std::size_t dst_height) {
  if (src.width == 0 || src.height == 0 || dst_width == 0 || dst_height == 0) {
    throw ContractError("resize_bilinear: empty image or target size");
  }
  if (src.width == dst_width && src.height == dst_height) return src;
  const auto xs = taps(src.width, dst_width);
  const auto ys = taps(src.height, dst_height);
  Image out(dst_width, dst_height);
  for (std::size_t y = 0; y < dst_height; ++y) {
    const Tap& ty = ys[y];
    for (std::size_t x = 0; x < dst_width; ++x) {
      const Tap& tx = xs[x];
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = src.at(tx.lo, ty.lo, c) * (1 - tx.frac) + src.at(tx.hi, ty.lo, c) * tx.frac;
        const double bot = src.at(tx.lo, ty.hi, c) * (1 - tx.frac) + src.at(tx.hi, ty.hi, c) * tx.frac;
        out.at(x, y, c) = top * (1 - ty.frac) + bot * ty.frac;
      }
    }
  }
  return out;
}

Image read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw ParseError("png: cannot read " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw ParseError("png: cannot decode " + path.string() + ": " + msg);
  }
  Image out(img.width, img.height);
  for (std::size_t i = 0; i < buffer.size(); ++i) out.pixels[i] = buffer[i] / 255.0;
  return out;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  std::vector<std::uint8_t> buffer(image.pixels.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    buffer[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.pixels[i], 0.0, 1.0) * 255.0));
  }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw std::runtime_error("png: cannot write " + path.string() + ": " + img.message);
  }
}

}  // namespace magicvo
