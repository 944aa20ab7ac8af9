#include "caplab/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "caplab/error.hpp"

namespace caplab {
namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    fail(ErrorKind::kInvalidInput,
         std::string(what) + ": shape mismatch " + std::to_string(a.height()) +
             "x" + std::to_string(a.width()) + "x" +
             std::to_string(a.channels()) + " vs " +
             std::to_string(b.height()) + "x" + std::to_string(b.width()) +
             "x" + std::to_string(b.channels()));
  }
}

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

std::array<double, kSsimWindow> gaussian_taps() {
  std::array<double, kSsimWindow> taps{};
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    taps[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += taps[i];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

// Separable valid-mode Gaussian filter.
GrayImage filter_valid(const GrayImage& src,
                       const std::array<double, kSsimWindow>& taps) {
  const int out_h = src.height() - kSsimWindow + 1;
  const int out_w = src.width() - kSsimWindow + 1;
  GrayImage rows(src.height(), out_w);
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < out_w; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) acc += taps[k] * src.at(y, x + k);
      rows.at(y, x) = acc;
    }
  }
  GrayImage out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) acc += taps[k] * rows.at(y + k, x);
      out.at(y, x) = acc;
    }
  }
  return out;
}

GrayImage multiply(const GrayImage& a, const GrayImage& b) {
  GrayImage out(a.height(), a.width());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = a.data()[i] * b.data()[i];
  }
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same_shape(a, b, "psnr");
  auto da = a.data();
  auto db = b.data();
  double sse = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = std::clamp(da[i], 0.0, 1.0) - std::clamp(db[i], 0.0, 1.0);
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(da.size());
  if (mse == 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
  require_same_shape(a, b, "ssim");
  if (a.height() < kSsimWindow || a.width() < kSsimWindow) {
    fail(ErrorKind::kInvalidInput,
         "ssim needs images of at least 11x11, got " +
             std::to_string(a.height()) + "x" + std::to_string(a.width()));
  }
  const GrayImage ya = to_grayscale(clamp01(a));
  const GrayImage yb = to_grayscale(clamp01(b));
  const auto taps = gaussian_taps();

  const GrayImage mu_a = filter_valid(ya, taps);
  const GrayImage mu_b = filter_valid(yb, taps);
  const GrayImage e_aa = filter_valid(multiply(ya, ya), taps);
  const GrayImage e_bb = filter_valid(multiply(yb, yb), taps);
  const GrayImage e_ab = filter_valid(multiply(ya, yb), taps);

  constexpr double c1 = (0.01 * 1.0) * (0.01 * 1.0);
  constexpr double c2 = (0.03 * 1.0) * (0.03 * 1.0);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a.data()[i];
    const double mb = mu_b.data()[i];
    const double var_a = e_aa.data()[i] - ma * ma;
    const double var_b = e_bb.data()[i] - mb * mb;
    const double cov = e_ab.data()[i] - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

double charbonnier(const Image& pred, const Image& target, double eps) {
  require_same_shape(pred, target, "charbonnier");
  auto p = pred.data();
  auto t = target.data();
  // Accumulates sqrt(d^2 + eps^2) - eps = d^2 / (sqrt(d^2 + eps^2) + eps),
  // so identical inputs return eps exactly.
  const double eps2 = eps * eps;
  double excess = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - t[i];
    if (d == 0.0) continue;
    excess += d * d / (std::sqrt(d * d + eps2) + eps);
  }
  return eps + excess / static_cast<double>(p.size());
}

Image charbonnier_grad(const Image& pred, const Image& target, double eps) {
  require_same_shape(pred, target, "charbonnier_grad");
  Image grad(pred.height(), pred.width(), pred.channels());
  auto p = pred.data();
  auto t = target.data();
  auto g = grad.data();
  const double eps2 = eps * eps;
  const double inv_n = 1.0 / static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - t[i];
    const double r = std::sqrt(d * d + eps2);
    g[i] = r > 0.0 ? d / r * inv_n : 0.0;
  }
  return grad;
}

MetricRecord evaluate_metrics(const Image& pred, const Image& target,
                              double eps) {
  const Image clamped = clamp01(pred);
  return {psnr(clamped, target), ssim(clamped, target),
          charbonnier(clamped, target, eps)};
}

}  // namespace caplab
