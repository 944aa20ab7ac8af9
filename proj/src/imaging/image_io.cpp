#include "caplab/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "caplab/error.hpp"

namespace caplab {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) fail(ErrorKind::kIo, "cannot open " + path.string());
  return f;
}

[[noreturn]] void png_error_handler(png_structp, png_const_charp msg) {
  throw Error(ErrorKind::kIo, std::string("libpng: ") + msg);
}

void png_warning_handler(png_structp, png_const_charp) {}

void write_rows(const std::filesystem::path& path, int width, int height,
                int color_type, const std::vector<png_byte>& pixels,
                int channels) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            png_error_handler,
                                            png_warning_handler);
  if (!png) fail(ErrorKind::kIo, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_write_struct(png, info); }
  } guard{&png, &info};
  if (!info) fail(ErrorKind::kIo, "png_create_info_struct failed");

  png_init_io(png, f.get());
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(pixels.data() + y * stride));
  }
  png_write_end(png, nullptr);
}

}  // namespace

int quantize_8bit(double v) {
  return static_cast<int>(std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5));
}

Image read_png(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  png_byte header[8];
  if (std::fread(header, 1, 8, f.get()) != 8 || png_sig_cmp(header, 0, 8)) {
    fail(ErrorKind::kIo, path.string() + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           png_error_handler,
                                           png_warning_handler);
  if (!png) fail(ErrorKind::kIo, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_read_struct(png, info, nullptr); }
  } guard{&png, &info};
  if (!info) fail(ErrorKind::kIo, "png_create_info_struct failed");

  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_byte color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (png_get_bit_depth(png, info) == 16) png_set_swap(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (channels != 1 && channels != 3) {
    fail(ErrorKind::kIo, path.string() + ": unsupported channel layout");
  }
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  std::vector<png_byte> buffer(row_bytes * height);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = buffer.data() + y * row_bytes;
  png_read_image(png, rows.data());

  Image img(height, width, channels);
  auto out = img.data();
  if (depth == 16) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      const unsigned v = buffer[2 * i] | (buffer[2 * i + 1] << 8);
      out[i] = v / 65535.0;
    }
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = buffer[i] / 255.0;
  }
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.channels() != 1 && img.channels() != 3) {
    fail(ErrorKind::kInvalidInput, "write_png supports 1 or 3 channels");
  }
  std::vector<png_byte> pixels(img.size());
  auto src = img.data();
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    pixels[i] = static_cast<png_byte>(quantize_8bit(src[i]));
  }
  write_rows(path, img.width(), img.height(),
             img.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
             pixels, img.channels());
}

void write_png(const std::filesystem::path& path, const GrayImage& img) {
  std::vector<png_byte> pixels(img.size());
  auto src = img.data();
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    pixels[i] = static_cast<png_byte>(quantize_8bit(src[i]));
  }
  write_rows(path, img.width(), img.height(), PNG_COLOR_TYPE_GRAY, pixels, 1);
}

Image to_rgb(const Image& img) {
  if (img.channels() == 3) return img;
  if (img.channels() != 1) {
    fail(ErrorKind::kInvalidInput, "cannot convert to RGB");
  }
  Image out(img.height(), img.width(), 3);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x, 0);
    }
  }
  return out;
}

Image quantize_image_8bit(const Image& img) {
  Image out = img;
  for (double& v : out.data()) v = quantize_8bit(v) / 255.0;
  return out;
}

bool is_image_file(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".png";
}

}  // namespace caplab
