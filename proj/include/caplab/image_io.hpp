#pragma once

#include <filesystem>

#include "caplab/image.hpp"

namespace caplab {

// 8- or 16-bit PNG -> [0,1] doubles. Gray stays single-channel, alpha is
// dropped, palettes are expanded to RGB.
Image read_png(const std::filesystem::path& path);

// Clamps to [0,1] and quantizes with round-half-up to 8 bits.
void write_png(const std::filesystem::path& path, const Image& img);
void write_png(const std::filesystem::path& path, const GrayImage& img);

// Replicates a single channel into RGB; 3-channel input is returned as is.
Image to_rgb(const Image& img);

// Round-half-up 8-bit code of a [0,1] value (clamped first).
int quantize_8bit(double v);

// Snaps every value to the nearest 8-bit code, as a PNG save/load would.
Image quantize_image_8bit(const Image& img);

bool is_image_file(const std::filesystem::path& path);

}  // namespace caplab
