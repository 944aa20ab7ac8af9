#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "caplab/image.hpp"
#include "caplab/jpeg.hpp"

namespace caplab {

struct DarkenParams {
  double gamma = 2.2;
  double gain = 0.2;
  double noise_sigma = 0.0;
};

// clamp(gain * img^gamma + N(0, noise_sigma), 0, 1), deterministic in seed.
Image darken(const Image& img, const DarkenParams& params, std::uint64_t seed);

enum class Split { kTrain, kVal };

struct ManifestEntry {
  std::string id;
  Split split = Split::kTrain;
};

struct Manifest {
  int qf = 80;
  DarkenParams darken;
  jpeg::Subsampling subsampling = jpeg::Subsampling::k444;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;

  std::size_t count(Split split) const;
};

struct SynthOptions {
  int qf = 80;
  DarkenParams darken;
  jpeg::Subsampling subsampling = jpeg::Subsampling::k444;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

inline constexpr const char* kManifestName = "manifest.csv";
inline constexpr const char* kBrightDir = "bright";
inline constexpr const char* kLowDir = "low";
inline constexpr const char* kLowJpegDir = "low_jpeg";

// Writes out_dir/{bright,low,low_jpeg}/<id>.png and out_dir/manifest.csv.
// Bright inputs are the PNG files directly inside bright_dir, sorted by name.
Manifest synthesize_dataset(const std::filesystem::path& bright_dir,
                            const std::filesystem::path& out_dir,
                            const SynthOptions& options);

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

struct DatasetTriplet {
  std::string id;
  Image compressed_low;    // network input
  Image uncompressed_low;  // pre-training target
  Image bright;            // enhancement target
};

struct Dataset {
  Manifest manifest;
  std::vector<DatasetTriplet> train;
  std::vector<DatasetTriplet> val;
};

// Loads every triplet referenced by root/manifest.csv.
Dataset load_dataset(const std::filesystem::path& root);

std::string to_string(Split split);
std::string to_string(jpeg::Subsampling subsampling);
jpeg::Subsampling parse_subsampling(const std::string& text);

}  // namespace caplab
