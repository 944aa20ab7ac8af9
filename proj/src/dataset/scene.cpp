#include "caplab/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <vector>

namespace caplab {
namespace {

// Smoothly interpolated lattice noise in [0,1].
class ValueNoise {
 public:
  ValueNoise(int height, int width, double cell, std::mt19937_64& rng)
      : cell_(cell),
        grid_h_(static_cast<int>(height / cell) + 2),
        grid_w_(static_cast<int>(width / cell) + 2),
        values_(static_cast<std::size_t>(grid_h_) * grid_w_) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : values_) v = u(rng);
  }

  double operator()(double y, double x) const {
    const double gy = y / cell_;
    const double gx = x / cell_;
    const int iy = static_cast<int>(gy);
    const int ix = static_cast<int>(gx);
    const double fy = smooth(gy - iy);
    const double fx = smooth(gx - ix);
    const double a = at(iy, ix) * (1 - fx) + at(iy, ix + 1) * fx;
    const double b = at(iy + 1, ix) * (1 - fx) + at(iy + 1, ix + 1) * fx;
    return a * (1 - fy) + b * fy;
  }

 private:
  static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }
  double at(int y, int x) const {
    return values_[static_cast<std::size_t>(std::min(y, grid_h_ - 1)) * grid_w_ +
                   std::min(x, grid_w_ - 1)];
  }

  double cell_;
  int grid_h_;
  int grid_w_;
  std::vector<double> values_;
};

struct Blob {
  double cy, cx, ry, rx, angle;
  bool rectangle;
  std::array<double, 3> color;
  double texture_gain;
};

}  // namespace

Image procedural_scene(int height, int width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double scale = std::max(height, width);

  std::array<double, 3> top{}, bottom{};
  for (int c = 0; c < 3; ++c) {
    top[c] = 0.3 + 0.7 * u(rng);
    bottom[c] = 0.1 + 0.6 * u(rng);
  }

  std::vector<Blob> blobs(4 + static_cast<int>(u(rng) * 8));
  for (auto& b : blobs) {
    b.cy = u(rng) * height;
    b.cx = u(rng) * width;
    b.ry = (0.08 + 0.3 * u(rng)) * scale;
    b.rx = (0.08 + 0.3 * u(rng)) * scale;
    b.angle = u(rng) * 3.14159265358979;
    b.rectangle = u(rng) < 0.4;
    for (auto& c : b.color) c = 0.05 + 0.95 * u(rng);
    b.texture_gain = 0.1 + 0.5 * u(rng);
  }

  const ValueNoise coarse(height, width, scale / 3.0, rng);
  const ValueNoise medium(height, width, scale / 10.0, rng);
  const ValueNoise fine(height, width, 3.0, rng);
  const ValueNoise light(height, width, scale / 2.0, rng);
  const double shadow_level = 0.25 + 0.3 * u(rng);

  Image img(height, width, 3);
  for (int y = 0; y < height; ++y) {
    const double t = static_cast<double>(y) / std::max(1, height - 1);
    for (int x = 0; x < width; ++x) {
      std::array<double, 3> px{};
      for (int c = 0; c < 3; ++c) px[c] = top[c] * (1 - t) + bottom[c] * t;

      for (const auto& b : blobs) {
        const double dy = y - b.cy;
        const double dx = x - b.cx;
        const double ry = (dy * std::cos(b.angle) - dx * std::sin(b.angle)) / b.ry;
        const double rx = (dy * std::sin(b.angle) + dx * std::cos(b.angle)) / b.rx;
        const double dist = b.rectangle ? std::max(std::abs(ry), std::abs(rx))
                                        : std::sqrt(ry * ry + rx * rx);
        const double edge = std::clamp((1.0 - dist) * 12.0, 0.0, 1.0);
        if (edge <= 0.0) continue;
        const double tex =
            1.0 + b.texture_gain * (medium(y, x) - 0.5 + 0.6 * (fine(y, x) - 0.5));
        for (int c = 0; c < 3; ++c) {
          px[c] = px[c] * (1 - edge) + edge * b.color[c] * tex;
        }
      }

      const double detail = 1.0 + 0.15 * (coarse(y, x) - 0.5) +
                            0.12 * (fine(y, x) - 0.5);
      // Illumination: smooth field pushed hard towards zero below the
      // shadow level.
      const double l = light(y, x);
      const double lit =
          l < shadow_level ? 0.02 + 0.98 * std::pow(l / shadow_level, 3.0) : 1.0;
      for (int c = 0; c < 3; ++c) {
        img.at(y, x, c) = std::clamp(px[c] * detail * lit, 0.0, 1.0);
      }
    }
  }
  return img;
}

}  // namespace caplab
