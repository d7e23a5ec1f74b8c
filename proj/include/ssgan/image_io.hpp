#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ssgan/tensor.hpp"

namespace ssgan::image {

// 8-bit interleaved raster.
struct Raster {
  int64_t width = 0;
  int64_t height = 0;
  int channels = 3;  // 1 (gray) or 3 (RGB)
  std::vector<uint8_t> pixels;
};

void write_png(const std::filesystem::path& path, const Raster& raster);
// Gray and RGB are kept; alpha is dropped and palettes are expanded.
Raster read_png(const std::filesystem::path& path);

// [H, W, C] in [-1, 1] <-> raster (p = round((x + 1) * 127.5)).
Raster to_raster(const TensorF& image);
TensorF from_raster(const Raster& raster);

// Tiles [N, H, W, C] images into one [rows*(H+pad)+pad, cols*(W+pad)+pad, C] image.
TensorF tile(const TensorF& images, int64_t cols, int64_t pad = 1, float fill = -1.0f);

}  // namespace ssgan::image
