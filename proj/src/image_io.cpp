// SPDX-License-Identifier: Apache-2.0
#include "lhg/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace lhg {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

GrayImage read_png_gray(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw Error("cannot open image: " + path.string());
  png_byte header[8];
  if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0)
    throw Error(path.string() + ": not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("libpng initialisation failed");
  }
  GrayImage out;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(path.string() + ": corrupt PNG");
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const auto width = png_get_image_width(png, info);
  const auto height = png_get_image_height(png, info);
  const int channels = png_get_channels(png, info);
  const auto stride = png_get_rowbytes(png, info);
  buffer.resize(stride * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = buffer.data() + y * stride;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  out.pixels.resize(height, width);
  for (png_uint_32 y = 0; y < height; ++y) {
    for (png_uint_32 x = 0; x < width; ++x) {
      const png_byte* p = rows[y] + x * static_cast<png_uint_32>(channels);
      const double v = channels >= 3 ? 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2] : p[0];
      out.pixels(y, x) = v / 255.0;
    }
  }
  return out;
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open image: " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P2" && magic != "P5") throw Error(path.string() + ": not a PGM file");
  auto next_int = [&]() {
    int v = -1;
    while (in >> std::ws && in.peek() == '#') {
      std::string skip;
      std::getline(in, skip);
    }
    in >> v;
    if (!in || v < 0) throw Error(path.string() + ": malformed PGM header");
    return v;
  };
  const int width = next_int();
  const int height = next_int();
  const int maxval = next_int();
  if (maxval <= 0 || maxval > 65535) throw Error(path.string() + ": bad PGM maxval");
  GrayImage out;
  out.pixels.resize(height, width);
  if (magic == "P2") {
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out.pixels(y, x) = static_cast<double>(next_int()) / maxval;
  } else {
    in.get();
    const int bytes = maxval < 256 ? 1 : 2;
    std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height * bytes);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw Error(path.string() + ": truncated PGM data");
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const std::size_t i = (static_cast<std::size_t>(y) * width + x) * bytes;
        const int v = bytes == 1 ? raw[i] : (raw[i] << 8) | raw[i + 1];
        out.pixels(y, x) = static_cast<double>(v) / maxval;
      }
    }
  }
  return out;
}

void write_png_raw(const std::filesystem::path& path, int width, int height, int color_type,
                   const std::uint8_t* data, std::size_t stride) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw Error("cannot write image: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("failed while writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(data + static_cast<std::size_t>(y) * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void RgbImage::set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  data[i] = r;
  data[i + 1] = g;
  data[i + 2] = b;
}

GrayImage rgb_to_gray(const RgbImage& rgb) {
  GrayImage out;
  out.pixels.resize(rgb.height, rgb.width);
  for (int y = 0; y < rgb.height; ++y) {
    for (int x = 0; x < rgb.width; ++x) {
      const std::size_t i = (static_cast<std::size_t>(y) * rgb.width + x) * 3;
      out.pixels(y, x) = (0.299 * rgb.data[i] + 0.587 * rgb.data[i + 1] + 0.114 * rgb.data[i + 2]) / 255.0;
    }
  }
  return out;
}

GrayImage read_gray_image(const std::filesystem::path& path) {
  const auto ext = lower_extension(path);
  if (ext == ".png") return read_png_gray(path);
  if (ext == ".pgm") return read_pgm(path);
  throw Error("unsupported image format: " + path.string());
}

void write_png(const RgbImage& image, const std::filesystem::path& path) {
  write_png_raw(path, image.width, image.height, PNG_COLOR_TYPE_RGB, image.data.data(),
                static_cast<std::size_t>(image.width) * 3);
}

void write_gray_image(const GrayImage& image, const std::filesystem::path& path) {
  const int w = static_cast<int>(image.width());
  const int h = static_cast<int>(image.height());
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      bytes[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>(
          std::lround(std::clamp(image.pixels(y, x), 0.0, 1.0) * 255.0));
  const auto ext = lower_extension(path);
  if (ext == ".png") {
    write_png_raw(path, w, h, PNG_COLOR_TYPE_GRAY, bytes.data(), static_cast<std::size_t>(w));
  } else if (ext == ".pgm") {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write image: " + path.string());
    out << "P5\n" << w << ' ' << h << "\n255\n";
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  } else {
    throw Error("unsupported image format: " + path.string());
  }
}

}  // namespace lhg
