#include "ssgan/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ssgan::image {

void write_png(const std::filesystem::path& path, const Raster& r) {
  if (r.channels != 1 && r.channels != 3) throw std::invalid_argument("write_png: 1 or 3 channels");
  if (static_cast<int64_t>(r.pixels.size()) != r.width * r.height * r.channels)
    throw std::invalid_argument("write_png: pixel buffer size mismatch");
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(r.width);
  img.height = static_cast<png_uint_32>(r.height);
  img.format = r.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, r.pixels.data(), 0, nullptr))
    throw std::runtime_error("cannot write " + path.string() + ": " + img.message);
}

Raster read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw std::runtime_error("cannot read " + path.string() + ": " + img.message);
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Raster r;
  r.width = img.width;
  r.height = img.height;
  r.channels = color ? 3 : 1;
  r.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, r.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw std::runtime_error("cannot decode " + path.string() + ": " + img.message);
  }
  return r;
}

Raster to_raster(const TensorF& image) {
  if (image.rank() != 3) throw ShapeError("to_raster: expected [H,W,C], got " + shape_str(image.shape()));
  Raster r;
  r.height = image.dim(0);
  r.width = image.dim(1);
  r.channels = static_cast<int>(image.dim(2));
  r.pixels.resize(static_cast<size_t>(image.size()));
  for (int64_t i = 0; i < image.size(); ++i)
    r.pixels[static_cast<size_t>(i)] =
        static_cast<uint8_t>(std::lround(std::clamp((image[i] + 1.0f) * 127.5f, 0.0f, 255.0f)));
  return r;
}

TensorF from_raster(const Raster& r) {
  TensorF out({r.height, r.width, r.channels});
  for (int64_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(r.pixels[static_cast<size_t>(i)] / 127.5 - 1.0);
  return out;
}

TensorF tile(const TensorF& images, int64_t cols, int64_t pad, float fill) {
  if (images.rank() != 4) throw ShapeError("tile: expected [N,H,W,C]");
  const int64_t n = images.dim(0), h = images.dim(1), w = images.dim(2), c = images.dim(3);
  cols = std::max<int64_t>(1, std::min(cols, n));
  const int64_t rows = (n + cols - 1) / cols;
  const int64_t H = rows * (h + pad) + pad, W = cols * (w + pad) + pad;
  TensorF out({H, W, c}, fill);
  for (int64_t k = 0; k < n; ++k) {
    const int64_t oy = pad + (k / cols) * (h + pad), ox = pad + (k % cols) * (w + pad);
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        for (int64_t ch = 0; ch < c; ++ch) out[((oy + y) * W + ox + x) * c + ch] = images[((k * h + y) * w + x) * c + ch];
  }
  return out;
}

}  // namespace ssgan::image
