#pragma once

#include <cstddef>
#include <filesystem>

#include "oiqa/tensor.hpp"

namespace oiqa {

/// Equirectangular panorama, RGB, values in [0, 1], stored channel-first
/// as a [3 x H x W] tensor. Row 0 is the top row (lat = +90 deg).
struct ErpImage {
  Tensor pixels;

  std::size_t width() const { return pixels.empty() ? 0 : pixels.dim(2); }
  std::size_t height() const { return pixels.empty() ? 0 : pixels.dim(1); }
  std::size_t channels() const { return pixels.empty() ? 0 : pixels.dim(0); }

  static ErpImage filled(std::size_t width, std::size_t height, double r, double g, double b);
};

/// Reads PNG/JPEG through OpenCV. Throws InputError when unreadable.
ErpImage load_image(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG from a [3 x H x W] tensor in [0, 1].
void save_png(const std::filesystem::path& path, const Tensor& chw);

}  // namespace oiqa
