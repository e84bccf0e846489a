// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "lhg/metrics.hpp"

namespace lhg {

/// 8-bit interleaved RGB raster, row-major.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 255) {}
  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

/// 0.299 R + 0.587 G + 0.114 B, scaled to [0, 1].
GrayImage rgb_to_gray(const RgbImage& rgb);

/// Loads PNG (gray, gray+alpha, RGB, RGBA; 8 or 16 bit) or binary/ASCII PGM,
/// chosen by file extension.
GrayImage read_gray_image(const std::filesystem::path& path);

void write_png(const RgbImage& image, const std::filesystem::path& path);
/// Writes an 8-bit grayscale PNG or PGM (by extension).
void write_gray_image(const GrayImage& image, const std::filesystem::path& path);

}  // namespace lhg
