#pragma once

#include <array>
#include <iosfwd>
#include <vector>

#include "caplab/image.hpp"

namespace caplab::jpeg {

using Block = std::array<double, 64>;
using Table = std::array<int, 64>;

// Annex K base tables, row-major (not zig-zag).
extern const Table kLumaBase;
extern const Table kChromaBase;

struct QuantTables {
  Table luma{};
  Table chroma{};
  int qf = 0;
};

enum class Subsampling { k444, k420 };

// IJG quality scaling: 5000/qf below 50, 200 - 2 qf otherwise; entries are
// clamped to [1,255].
QuantTables scale_quant_tables(int qf);

// Orthonormal 8x8 DCT-II and its inverse.
Block forward_dct(const Block& samples);
Block inverse_dct(const Block& coefficients);

// Divide-and-round by the table, then multiply back.
Block quantize_dequantize(const Block& coefficients, const Table& table);

// Full-range JFIF conversion in [0,1] units; chroma is centred on 0.5.
std::array<double, 3> rgb_to_ycbcr(double r, double g, double b);
std::array<double, 3> ycbcr_to_rgb(double y, double cb, double cr);

// DCT -> quantize -> dequantize -> IDCT on three colour planes. Returns the
// reconstruction before the final clamp so transform paths can be compared
// exactly; jpeg_roundtrip() clamps.
Image jpeg_roundtrip_unclamped(const Image& img, int qf,
                               Subsampling subsampling = Subsampling::k444);
Image jpeg_roundtrip(const Image& img, int qf,
                     Subsampling subsampling = Subsampling::k444);

// Per-pixel channel mean of |orig - recon|.
GrayImage loss_map(const Image& orig, const Image& recon);

struct LossReport {
  std::vector<double> bin_edges;  // k + 1 values, 0 .. 1
  std::vector<double> mean_abs_loss;
  std::vector<double> pixel_fraction;
  std::vector<double> loss_fraction;  // all zero when total loss is zero
  int qf = 0;

  std::size_t bins() const { return mean_abs_loss.size(); }
};

// Bins pixels by BT.601 luminance of orig into k equal-width bins.
LossReport binned_loss_stats(const Image& orig, const GrayImage& lmap, int k,
                             int qf = 0);
// Same, with an explicit per-pixel luminance used for binning.
LossReport binned_loss_stats(const GrayImage& luminance, const GrayImage& lmap,
                             int k, int qf = 0);

// Columns: bin_low,bin_high,pixel_fraction,mean_abs_loss,loss_fraction
void write_loss_report_csv(std::ostream& out, const LossReport& report);

}  // namespace caplab::jpeg
