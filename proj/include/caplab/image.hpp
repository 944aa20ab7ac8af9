#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace caplab {

// Interleaved H x W x C raster of doubles. Loaded/saved images live in
// [0,1]; network outputs may leave that range until they are clamped.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height_) * width_;
  }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

  double& at(int y, int x, int c) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  double at(int y, int x, int c) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool operator==(const Image& other) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int height, int width, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  double& at(int y, int x) {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  double at(int y, int x) const {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool operator==(const GrayImage& other) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

// Elements are exactly 0 or 1.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, std::uint8_t fill = 1);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  std::uint8_t at(int y, int x) const {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  void set(int y, int x, bool value) {
    data_[static_cast<std::size_t>(y) * width_ + x] = value ? 1 : 0;
  }
  std::span<const std::uint8_t> data() const { return data_; }

  bool operator==(const BinaryMask& other) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

// BT.601 luma weights for RGB; single-channel images pass through.
GrayImage to_grayscale(const Image& img);

// gray(img) / max(gray(img)). An all-black image yields an all-ones map so
// brightness-guided attention falls back to plain attention.
GrayImage brightness_map(const Image& img);

// 0 where b < tau, 1 elsewhere. tau must lie in [0,1].
BinaryMask threshold_mask(const GrayImage& b, double tau);

Image clamp01(const Image& img);

// Replicates border pixels so the result is (height + pad_bottom) x
// (width + pad_right).
Image pad_edge(const Image& img, int pad_bottom, int pad_right);
GrayImage pad_edge(const GrayImage& img, int pad_bottom, int pad_right);

Image crop(const Image& img, int y0, int x0, int height, int width);

Image flip_horizontal(const Image& img);
Image flip_vertical(const Image& img);

}  // namespace caplab
