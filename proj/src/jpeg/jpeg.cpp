#include "caplab/jpeg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <string>

#include "caplab/error.hpp"
#include "caplab/format.hpp"

namespace caplab::jpeg {

const Table kLumaBase = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99,
};

const Table kChromaBase = {
    17, 18, 24, 47, 99, 99, 99, 99,  //
    18, 21, 26, 66, 99, 99, 99, 99,  //
    24, 26, 56, 99, 99, 99, 99, 99,  //
    47, 66, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,
};

namespace {

// basis[u][x] = c(u) cos((2x + 1) u pi / 16)
std::array<std::array<double, 8>, 8> make_basis() {
  std::array<std::array<double, 8>, 8> basis{};
  for (int u = 0; u < 8; ++u) {
    const double scale = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
    for (int x = 0; x < 8; ++x) {
      basis[u][x] =
          scale * std::cos((2.0 * x + 1.0) * u * std::numbers::pi / 16.0);
    }
  }
  return basis;
}

const std::array<std::array<double, 8>, 8>& basis() {
  static const auto kBasis = make_basis();
  return kBasis;
}

Table scale_table(const Table& base, int scale) {
  Table out{};
  for (int i = 0; i < 64; ++i) {
    const int q = (base[i] * scale + 50) / 100;
    out[i] = std::clamp(q, 1, 255);
  }
  return out;
}

void check_qf(int qf) {
  if (qf < 1 || qf > 100) {
    fail(ErrorKind::kInvalidConfig,
         "quality factor must lie in [1,100], got " + std::to_string(qf));
  }
}

// Level shift: samples enter the transform as (v - 0.5) * 255.
constexpr double kSampleScale = 255.0;

struct Plane {
  int height = 0;
  int width = 0;
  std::vector<double> values;
  double& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
};

void roundtrip_plane(Plane& plane, const Table& table) {
  for (int by = 0; by < plane.height; by += 8) {
    for (int bx = 0; bx < plane.width; bx += 8) {
      Block block{};
      for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
          block[y * 8 + x] = (plane.at(by + y, bx + x) - 0.5) * kSampleScale;
        }
      }
      const Block recon =
          inverse_dct(quantize_dequantize(forward_dct(block), table));
      for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
          plane.at(by + y, bx + x) = recon[y * 8 + x] / kSampleScale + 0.5;
        }
      }
    }
  }
}

Plane downsample2x2(const Plane& full) {
  Plane half{full.height / 2, full.width / 2, {}};
  half.values.resize(static_cast<std::size_t>(half.height) * half.width);
  for (int y = 0; y < half.height; ++y) {
    for (int x = 0; x < half.width; ++x) {
      half.at(y, x) = 0.25 * (full.at(2 * y, 2 * x) + full.at(2 * y, 2 * x + 1) +
                              full.at(2 * y + 1, 2 * x) +
                              full.at(2 * y + 1, 2 * x + 1));
    }
  }
  return half;
}

Plane upsample2x2(const Plane& half) {
  Plane full{half.height * 2, half.width * 2, {}};
  full.values.resize(static_cast<std::size_t>(full.height) * full.width);
  for (int y = 0; y < full.height; ++y) {
    for (int x = 0; x < full.width; ++x) full.at(y, x) = half.at(y / 2, x / 2);
  }
  return full;
}

}  // namespace

QuantTables scale_quant_tables(int qf) {
  check_qf(qf);
  const int scale = qf < 50 ? 5000 / qf : 200 - 2 * qf;
  return {scale_table(kLumaBase, scale), scale_table(kChromaBase, scale), qf};
}

Block forward_dct(const Block& samples) {
  const auto& c = basis();
  Block tmp{};
  // Rows first: tmp[y][u] = sum_x c[u][x] s[y][x]
  for (int y = 0; y < 8; ++y) {
    for (int u = 0; u < 8; ++u) {
      double acc = 0.0;
      for (int x = 0; x < 8; ++x) acc += c[u][x] * samples[y * 8 + x];
      tmp[y * 8 + u] = acc;
    }
  }
  Block out{};
  for (int v = 0; v < 8; ++v) {
    for (int u = 0; u < 8; ++u) {
      double acc = 0.0;
      for (int y = 0; y < 8; ++y) acc += c[v][y] * tmp[y * 8 + u];
      out[v * 8 + u] = acc;
    }
  }
  return out;
}

Block inverse_dct(const Block& coefficients) {
  const auto& c = basis();
  Block tmp{};
  for (int v = 0; v < 8; ++v) {
    for (int x = 0; x < 8; ++x) {
      double acc = 0.0;
      for (int u = 0; u < 8; ++u) acc += c[u][x] * coefficients[v * 8 + u];
      tmp[v * 8 + x] = acc;
    }
  }
  Block out{};
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      double acc = 0.0;
      for (int v = 0; v < 8; ++v) acc += c[v][y] * tmp[v * 8 + x];
      out[y * 8 + x] = acc;
    }
  }
  return out;
}

Block quantize_dequantize(const Block& coefficients, const Table& table) {
  Block out{};
  for (int i = 0; i < 64; ++i) {
    out[i] = std::round(coefficients[i] / table[i]) * table[i];
  }
  return out;
}

std::array<double, 3> rgb_to_ycbcr(double r, double g, double b) {
  return {0.299 * r + 0.587 * g + 0.114 * b,
          -0.168736 * r - 0.331264 * g + 0.5 * b + 0.5,
          0.5 * r - 0.418688 * g - 0.081312 * b + 0.5};
}

std::array<double, 3> ycbcr_to_rgb(double y, double cb, double cr) {
  const double u = cb - 0.5;
  const double v = cr - 0.5;
  return {y + 1.402 * v, y - 0.344136 * u - 0.714136 * v, y + 1.772 * u};
}

Image jpeg_roundtrip_unclamped(const Image& img, int qf,
                               Subsampling subsampling) {
  check_qf(qf);
  if (img.channels() != 3) {
    fail(ErrorKind::kInvalidInput,
         "jpeg_roundtrip expects a 3-channel image, got " +
             std::to_string(img.channels()));
  }
  const QuantTables tables = scale_quant_tables(qf);
  const int unit = subsampling == Subsampling::k420 ? 16 : 8;
  const int pad_h = (unit - img.height() % unit) % unit;
  const int pad_w = (unit - img.width() % unit) % unit;
  const Image padded = pad_edge(img, pad_h, pad_w);

  const int h = padded.height();
  const int w = padded.width();
  std::array<Plane, 3> planes;
  for (auto& p : planes) {
    p = Plane{h, w, std::vector<double>(static_cast<std::size_t>(h) * w)};
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto ycc =
          rgb_to_ycbcr(padded.at(y, x, 0), padded.at(y, x, 1), padded.at(y, x, 2));
      for (int c = 0; c < 3; ++c) planes[c].at(y, x) = ycc[c];
    }
  }

  roundtrip_plane(planes[0], tables.luma);
  for (int c = 1; c < 3; ++c) {
    if (subsampling == Subsampling::k420) {
      Plane half = downsample2x2(planes[c]);
      roundtrip_plane(half, tables.chroma);
      planes[c] = upsample2x2(half);
    } else {
      roundtrip_plane(planes[c], tables.chroma);
    }
  }

  Image out(img.height(), img.width(), 3);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const auto rgb = ycbcr_to_rgb(planes[0].at(y, x), planes[1].at(y, x),
                                    planes[2].at(y, x));
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = rgb[c];
    }
  }
  return out;
}

Image jpeg_roundtrip(const Image& img, int qf, Subsampling subsampling) {
  return clamp01(jpeg_roundtrip_unclamped(img, qf, subsampling));
}

GrayImage loss_map(const Image& orig, const Image& recon) {
  if (!orig.same_shape(recon)) {
    fail(ErrorKind::kInvalidInput, "loss_map: shape mismatch");
  }
  GrayImage out(orig.height(), orig.width());
  const int channels = orig.channels();
  auto a = orig.data();
  auto b = recon.data();
  for (std::size_t p = 0; p < out.size(); ++p) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      acc += std::abs(a[p * channels + c] - b[p * channels + c]);
    }
    out.data()[p] = acc / channels;
  }
  return out;
}

LossReport binned_loss_stats(const Image& orig, const GrayImage& lmap, int k,
                             int qf) {
  return binned_loss_stats(to_grayscale(orig), lmap, k, qf);
}

LossReport binned_loss_stats(const GrayImage& luminance, const GrayImage& lmap,
                             int k, int qf) {
  if (k < 2) {
    fail(ErrorKind::kInvalidConfig,
         "need at least 2 luminance bins, got " + std::to_string(k));
  }
  if (luminance.height() != lmap.height() || luminance.width() != lmap.width()) {
    fail(ErrorKind::kInvalidInput, "loss map does not match image shape");
  }
  LossReport report;
  report.qf = qf;
  report.bin_edges.resize(k + 1);
  for (int i = 0; i <= k; ++i) report.bin_edges[i] = static_cast<double>(i) / k;

  std::vector<double> loss_sum(k, 0.0);
  std::vector<std::size_t> count(k, 0);
  for (std::size_t p = 0; p < lmap.size(); ++p) {
    const double lum = std::clamp(luminance.data()[p], 0.0, 1.0);
    const int bin = std::min(k - 1, static_cast<int>(lum * k));
    loss_sum[bin] += lmap.data()[p];
    ++count[bin];
  }
  double total = 0.0;
  for (double s : loss_sum) total += s;

  const double n = static_cast<double>(lmap.size());
  report.mean_abs_loss.resize(k);
  report.pixel_fraction.resize(k);
  report.loss_fraction.resize(k);
  for (int i = 0; i < k; ++i) {
    report.mean_abs_loss[i] = count[i] ? loss_sum[i] / count[i] : 0.0;
    report.pixel_fraction[i] = count[i] / n;
    report.loss_fraction[i] = total > 0.0 ? loss_sum[i] / total : 0.0;
  }
  return report;
}

void write_loss_report_csv(std::ostream& out, const LossReport& report) {
  out << "bin_low,bin_high,pixel_fraction,mean_abs_loss,loss_fraction\n";
  for (std::size_t i = 0; i < report.bins(); ++i) {
    out << format_real(report.bin_edges[i]) << ','
        << format_real(report.bin_edges[i + 1]) << ','
        << format_real(report.pixel_fraction[i]) << ','
        << format_real(report.mean_abs_loss[i]) << ','
        << format_real(report.loss_fraction[i]) << '\n';
  }
}

}  // namespace caplab::jpeg
