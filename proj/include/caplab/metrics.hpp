#pragma once

#include "caplab/image.hpp"

namespace caplab {

// Reported for identical inputs so CSV output stays finite.
inline constexpr double kPsnrCapDb = 100.0;
inline constexpr double kCharbonnierEps = 1e-3;

struct MetricRecord {
  double psnr = 0.0;
  double ssim = 0.0;
  double charbonnier = 0.0;
};

// RGB PSNR with peak 1.0; both inputs are clamped to [0,1] first.
double psnr(const Image& a, const Image& b);

// Mean single-scale SSIM on BT.601 luminance; 11x11 Gaussian window
// (sigma 1.5), K1 = 0.01, K2 = 0.03, valid windows only.
double ssim(const Image& a, const Image& b);

// Mean over every element of sqrt((pred - target)^2 + eps^2).
double charbonnier(const Image& pred, const Image& target,
                   double eps = kCharbonnierEps);

// d charbonnier / d pred, same layout as pred.
Image charbonnier_grad(const Image& pred, const Image& target,
                       double eps = kCharbonnierEps);

// Clamps pred, then evaluates all three metrics against target. The
// Charbonnier term is computed on the clamped prediction as well.
MetricRecord evaluate_metrics(const Image& pred, const Image& target,
                              double eps = kCharbonnierEps);

}  // namespace caplab
