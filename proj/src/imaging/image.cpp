#include "caplab/image.hpp"

#include <algorithm>
#include <string>

#include "caplab/error.hpp"

namespace caplab {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kInvalidConfig: return "invalid-config";
    case ErrorKind::kIngestion: return "ingestion";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kModelConstruction: return "model-construction";
    case ErrorKind::kInternal: return "internal";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

namespace {

void check_dims(int height, int width) {
  if (height <= 0 || width <= 0) {
    fail(ErrorKind::kInvalidInput, "image dimensions must be positive, got " +
                                       std::to_string(height) + "x" +
                                       std::to_string(width));
  }
}

}  // namespace

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  check_dims(height, width);
  if (channels <= 0) {
    fail(ErrorKind::kInvalidInput, "image must have at least one channel");
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

GrayImage::GrayImage(int height, int width, double fill)
    : height_(height), width_(width) {
  check_dims(height, width);
  data_.assign(static_cast<std::size_t>(height) * width, fill);
}

BinaryMask::BinaryMask(int height, int width, std::uint8_t fill)
    : height_(height), width_(width) {
  check_dims(height, width);
  data_.assign(static_cast<std::size_t>(height) * width, fill ? 1 : 0);
}

GrayImage to_grayscale(const Image& img) {
  if (img.channels() != 1 && img.channels() != 3) {
    fail(ErrorKind::kInvalidInput,
         "to_grayscale expects 1 or 3 channels, got " +
             std::to_string(img.channels()));
  }
  GrayImage out(img.height(), img.width());
  auto src = img.data();
  auto dst = out.data();
  if (img.channels() == 1) {
    std::copy(src.begin(), src.end(), dst.begin());
    return out;
  }
  for (std::size_t p = 0; p < dst.size(); ++p) {
    dst[p] = 0.299 * src[3 * p] + 0.587 * src[3 * p + 1] +
             0.114 * src[3 * p + 2];
  }
  return out;
}

GrayImage brightness_map(const Image& img) {
  GrayImage gray = to_grayscale(img);
  auto values = gray.data();
  const double peak = *std::max_element(values.begin(), values.end());
  if (!(peak > 0.0)) {
    return GrayImage(gray.height(), gray.width(), 1.0);
  }
  for (double& v : values) v /= peak;
  return gray;
}

BinaryMask threshold_mask(const GrayImage& b, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    fail(ErrorKind::kInvalidConfig,
         "mask threshold must lie in [0,1], got " + std::to_string(tau));
  }
  BinaryMask mask(b.height(), b.width());
  for (int y = 0; y < b.height(); ++y) {
    for (int x = 0; x < b.width(); ++x) mask.set(y, x, !(b.at(y, x) < tau));
  }
  return mask;
}

Image clamp01(const Image& img) {
  Image out = img;
  for (double& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

Image pad_edge(const Image& img, int pad_bottom, int pad_right) {
  if (pad_bottom < 0 || pad_right < 0) {
    fail(ErrorKind::kInternal, "negative padding");
  }
  if (pad_bottom == 0 && pad_right == 0) return img;
  Image out(img.height() + pad_bottom, img.width() + pad_right,
            img.channels());
  for (int y = 0; y < out.height(); ++y) {
    const int sy = std::min(y, img.height() - 1);
    for (int x = 0; x < out.width(); ++x) {
      const int sx = std::min(x, img.width() - 1);
      for (int c = 0; c < img.channels(); ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

GrayImage pad_edge(const GrayImage& img, int pad_bottom, int pad_right) {
  if (pad_bottom < 0 || pad_right < 0) {
    fail(ErrorKind::kInternal, "negative padding");
  }
  GrayImage out(img.height() + pad_bottom, img.width() + pad_right);
  for (int y = 0; y < out.height(); ++y) {
    const int sy = std::min(y, img.height() - 1);
    for (int x = 0; x < out.width(); ++x) {
      out.at(y, x) = img.at(sy, std::min(x, img.width() - 1));
    }
  }
  return out;
}

Image crop(const Image& img, int y0, int x0, int height, int width) {
  if (y0 < 0 || x0 < 0 || y0 + height > img.height() ||
      x0 + width > img.width()) {
    fail(ErrorKind::kInvalidInput, "crop window outside image");
  }
  Image out(height, width, img.channels());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < img.channels(); ++c) {
        out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
      }
    }
  }
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out(img.height(), img.width(), img.channels());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) {
        out.at(y, x, c) = img.at(y, img.width() - 1 - x, c);
      }
    }
  }
  return out;
}

Image flip_vertical(const Image& img) {
  Image out(img.height(), img.width(), img.channels());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) {
        out.at(y, x, c) = img.at(img.height() - 1 - y, x, c);
      }
    }
  }
  return out;
}

}  // namespace caplab
