#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace magicvo {

/// RGB image, interleaved, row-major, values in [0, 1].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;  // height * width * 3

  Image() = default;
  Image(std::size_t w, std::size_t h, double fill = 0.0)
      : width(w), height(h), pixels(w * h * 3, fill) {}

  double& at(std::size_t x, std::size_t y, std::size_t c) {
    return pixels[(y * width + x) * 3 + c];
  }
  double at(std::size_t x, std::size_t y, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }
  bool same_size(const Image& o) const { return width == o.width && height == o.height; }
};

/// Bilinear resampling with corner-aligned sampling: output pixel x maps to
/// source coordinate x * (src_w - 1) / (dst_w - 1).
Image resize_bilinear(const Image& src, std::size_t dst_width, std::size_t dst_height);

/// 8-bit RGB PNG. Values are clamped to [0, 1] and rounded on write.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

}  // namespace magicvo
