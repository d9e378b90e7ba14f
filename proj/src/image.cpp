#include "oiqa/image.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "oiqa/error.hpp"

namespace oiqa {

ErpImage ErpImage::filled(std::size_t width, std::size_t height, double r, double g, double b) {
  ErpImage img{Tensor({3, height, width})};
  const double rgb[3] = {r, g, b};
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) img.pixels(c, y, x) = rgb[c];
  return img;
}

ErpImage load_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw InputError("cannot read image " + path.string());
  const auto h = static_cast<std::size_t>(bgr.rows), w = static_cast<std::size_t>(bgr.cols);
  ErpImage img{Tensor({3, h, w})};
  for (std::size_t y = 0; y < h; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(static_cast<int>(y));
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) img.pixels(c, y, x) = row[x][2 - c] / 255.0;
    }
  }
  return img;
}

void save_png(const std::filesystem::path& path, const Tensor& chw) {
  if (chw.rank() != 3 || chw.dim(0) != 3) throw ShapeError("save_png expects a [3 x H x W] tensor");
  const int h = static_cast<int>(chw.dim(1)), w = static_cast<int>(chw.dim(2));
  cv::Mat bgr(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(chw(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)), 0.0, 1.0);
        row[x][2 - c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }
  if (!cv::imwrite(path.string(), bgr)) throw InputError("cannot write image " + path.string());
}

}  // namespace oiqa
