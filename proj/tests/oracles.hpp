#pragma once

// Brute-force references shared by the unit tests and the acceptance suite.
// Deliberately scalar and separate from the library code paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "caplab/image.hpp"
#include "caplab/jpeg.hpp"

namespace testing {

using Mat = Eigen::MatrixXd;

// Softmax over the unmasked key columns only; masked columns get weight 0.
inline Mat oracle_attention(const Mat& q, const Mat& k, const Mat& v,
                            const std::vector<std::uint8_t>& mask, int heads,
                            std::vector<Mat>* weights = nullptr) {
  const int n = static_cast<int>(q.rows());
  const int d = static_cast<int>(q.cols());
  const int dh = d / heads;
  Mat out = Mat::Zero(n, d);
  for (int h = 0; h < heads; ++h) {
    Mat w = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      std::vector<double> logit(n, 0.0);
      double mx = -1e300;
      for (int j = 0; j < n; ++j) {
        if (!mask[j]) continue;
        double s = 0.0;
        for (int c = 0; c < dh; ++c) s += q(i, h * dh + c) * k(j, h * dh + c);
        logit[j] = s / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, logit[j]);
      }
      double z = 0.0;
      for (int j = 0; j < n; ++j)
        if (mask[j]) z += std::exp(logit[j] - mx);
      for (int j = 0; j < n; ++j) w(i, j) = mask[j] ? std::exp(logit[j] - mx) / z : 0.0;
      for (int c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += w(i, j) * v(j, h * dh + c);
        out(i, h * dh + c) = acc;
      }
    }
    if (weights) weights->push_back(w);
  }
  return out;
}

// Straight 2-D DCT-II sum, no separability.
inline double dct_coeff(const double* s, int u, int v) {
  const double cu = u == 0 ? std::sqrt(0.125) : 0.5;
  const double cv = v == 0 ? std::sqrt(0.125) : 0.5;
  double acc = 0.0;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      acc += s[y * 8 + x] * std::cos((2 * x + 1) * u * std::numbers::pi / 16) *
             std::cos((2 * y + 1) * v * std::numbers::pi / 16);
  return cu * cv * acc;
}

inline double idct_sample(const double* c, int x, int y) {
  double acc = 0.0;
  for (int v = 0; v < 8; ++v)
    for (int u = 0; u < 8; ++u) {
      const double cu = u == 0 ? std::sqrt(0.125) : 0.5;
      const double cv = v == 0 ? std::sqrt(0.125) : 0.5;
      acc += cu * cv * c[v * 8 + u] * std::cos((2 * x + 1) * u * std::numbers::pi / 16) *
             std::cos((2 * y + 1) * v * std::numbers::pi / 16);
    }
  return acc;
}

inline int ijg_quant(int base, int qf) {
  const int scale = qf < 50 ? 5000 / qf : 200 - 2 * qf;
  int q = (base * scale + 50) / 100;
  return q < 1 ? 1 : (q > 255 ? 255 : q);
}

// Scalar 4:4:4 surrogate for images whose sides are multiples of 8.
inline caplab::Image oracle_roundtrip(const caplab::Image& img, int qf) {
  const int h = img.height(), w = img.width();
  std::vector<double> planes[3];
  for (auto& p : planes) p.resize(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
      planes[0][y * w + x] = 0.299 * r + 0.587 * g + 0.114 * b;
      planes[1][y * w + x] = -0.168736 * r - 0.331264 * g + 0.5 * b + 0.5;
      planes[2][y * w + x] = 0.5 * r - 0.418688 * g - 0.081312 * b + 0.5;
    }
  for (int c = 0; c < 3; ++c) {
    const auto& base = c == 0 ? caplab::jpeg::kLumaBase : caplab::jpeg::kChromaBase;
    for (int by = 0; by < h; by += 8)
      for (int bx = 0; bx < w; bx += 8) {
        double s[64], coef[64];
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) s[y * 8 + x] = (planes[c][(by + y) * w + bx + x] - 0.5) * 255.0;
        for (int v = 0; v < 8; ++v)
          for (int u = 0; u < 8; ++u) {
            const int q = ijg_quant(base[v * 8 + u], qf);
            coef[v * 8 + u] = std::round(dct_coeff(s, u, v) / q) * q;
          }
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x)
            planes[c][(by + y) * w + bx + x] = idct_sample(coef, x, y) / 255.0 + 0.5;
      }
  }
  caplab::Image out(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double Y = planes[0][y * w + x], cb = planes[1][y * w + x] - 0.5, cr = planes[2][y * w + x] - 0.5;
      out.at(y, x, 0) = Y + 1.402 * cr;
      out.at(y, x, 1) = Y - 0.344136 * cb - 0.714136 * cr;
      out.at(y, x, 2) = Y + 1.772 * cb;
    }
  return out;
}

}  // namespace testing
