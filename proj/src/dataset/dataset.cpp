#include "caplab/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "caplab/error.hpp"
#include "caplab/format.hpp"
#include "caplab/image_io.hpp"

namespace caplab {

namespace fs = std::filesystem;

std::string to_string(Split split) {
  return split == Split::kTrain ? "train" : "val";
}

std::string to_string(jpeg::Subsampling subsampling) {
  return subsampling == jpeg::Subsampling::k420 ? "420" : "444";
}

jpeg::Subsampling parse_subsampling(const std::string& text) {
  if (text == "444" || text == "4:4:4") return jpeg::Subsampling::k444;
  if (text == "420" || text == "4:2:0") return jpeg::Subsampling::k420;
  fail(ErrorKind::kInvalidConfig, "unknown chroma subsampling '" + text + "'");
}

std::size_t Manifest::count(Split split) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(),
                    [&](const ManifestEntry& e) { return e.split == split; }));
}

Image darken(const Image& img, const DarkenParams& params, std::uint64_t seed) {
  if (!(params.gamma >= 1.0)) {
    fail(ErrorKind::kInvalidConfig, "darken gamma must be >= 1");
  }
  if (!(params.gain > 0.0 && params.gain <= 1.0)) {
    fail(ErrorKind::kInvalidConfig, "darken gain must lie in (0,1]");
  }
  if (!(params.noise_sigma >= 0.0)) {
    fail(ErrorKind::kInvalidConfig, "darken noise_sigma must be >= 0");
  }
  Image out = img;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (double& v : out.data()) {
    double x = params.gain * std::pow(std::max(v, 0.0), params.gamma);
    if (params.noise_sigma > 0.0) x += params.noise_sigma * noise(rng);
    v = std::clamp(x, 0.0, 1.0);
  }
  return out;
}

namespace {

std::uint64_t image_seed(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::array<std::uint32_t, 2> words{};
  seq.generate(words.begin(), words.end());
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  return fields;
}

}  // namespace

Manifest synthesize_dataset(const fs::path& bright_dir, const fs::path& out_dir,
                            const SynthOptions& options) {
  jpeg::scale_quant_tables(options.qf);  // validates qf
  if (!(options.train_fraction >= 0.0 && options.train_fraction <= 1.0)) {
    fail(ErrorKind::kInvalidConfig, "train split fraction must lie in [0,1]");
  }
  if (!fs::is_directory(bright_dir)) {
    fail(ErrorKind::kIngestion, bright_dir.string() + " is not a directory");
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(bright_dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.size() < 2) {
    fail(ErrorKind::kIngestion, "need at least 2 PNG images in " +
                                    bright_dir.string() + ", found " +
                                    std::to_string(files.size()));
  }

  std::vector<Image> images;
  std::vector<std::string> offenders;
  for (const auto& file : files) {
    try {
      Image img = to_rgb(read_png(file));
      if (img.height() < 8 || img.width() < 8) {
        offenders.push_back(file.filename().string() + " (smaller than 8x8)");
        continue;
      }
      images.push_back(std::move(img));
    } catch (const Error& e) {
      offenders.push_back(file.filename().string() + " (" + e.what() + ")");
    }
  }
  if (!offenders.empty()) {
    std::string msg = "unreadable inputs:";
    for (const auto& o : offenders) msg += " " + o;
    fail(ErrorKind::kIngestion, msg);
  }

  Manifest manifest;
  manifest.qf = options.qf;
  manifest.darken = options.darken;
  manifest.subsampling = options.subsampling;
  manifest.seed = options.seed;

  std::vector<std::size_t> order(files.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(options.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(
      std::llround(options.train_fraction * static_cast<double>(files.size())));
  std::vector<Split> splits(files.size(), Split::kVal);
  for (std::size_t i = 0; i < n_train; ++i) splits[order[i]] = Split::kTrain;

  for (const char* sub : {kBrightDir, kLowDir, kLowJpegDir}) {
    fs::create_directories(out_dir / sub);
  }
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::string id = files[i].stem().string();
    // The stored low-light image is 8-bit, so compress exactly what is stored.
    const Image low = quantize_image_8bit(
        darken(images[i], options.darken, image_seed(options.seed, i)));
    const Image low_jpeg = jpeg::jpeg_roundtrip(low, options.qf, options.subsampling);
    write_png(out_dir / kBrightDir / (id + ".png"), images[i]);
    write_png(out_dir / kLowDir / (id + ".png"), low);
    write_png(out_dir / kLowJpegDir / (id + ".png"), low_jpeg);
    manifest.entries.push_back({id, splits[i]});
  }
  write_manifest(out_dir / kManifestName, manifest);
  return manifest;
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << "id,split,qf,gamma,gain,noise_sigma,subsampling,seed\n";
  for (const auto& e : manifest.entries) {
    out << e.id << ',' << to_string(e.split) << ',' << manifest.qf << ','
        << format_real(manifest.darken.gamma) << ','
        << format_real(manifest.darken.gain) << ','
        << format_real(manifest.darken.noise_sigma) << ','
        << to_string(manifest.subsampling) << ',' << manifest.seed << '\n';
  }
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIngestion, "cannot read manifest " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("id,split,qf", 0) != 0) {
    fail(ErrorKind::kIngestion, path.string() + ": missing manifest header");
  }
  Manifest manifest;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 8 || (f[1] != "train" && f[1] != "val")) {
      fail(ErrorKind::kIngestion, path.string() + ": malformed record on line " +
                                      std::to_string(line_no));
    }
    try {
      manifest.qf = std::stoi(f[2]);
      manifest.darken = {std::stod(f[3]), std::stod(f[4]), std::stod(f[5])};
      manifest.subsampling = parse_subsampling(f[6]);
      manifest.seed = std::stoull(f[7]);
    } catch (const std::logic_error&) {
      fail(ErrorKind::kIngestion, path.string() + ": bad number on line " +
                                      std::to_string(line_no));
    }
    manifest.entries.push_back({f[0], f[1] == "train" ? Split::kTrain : Split::kVal});
  }
  if (manifest.entries.empty()) {
    fail(ErrorKind::kIngestion, path.string() + ": manifest lists no triplets");
  }
  return manifest;
}

Dataset load_dataset(const fs::path& root) {
  Dataset ds;
  ds.manifest = read_manifest(root / kManifestName);
  for (const auto& e : ds.manifest.entries) {
    DatasetTriplet t;
    t.id = e.id;
    const std::string name = e.id + ".png";
    t.compressed_low = to_rgb(read_png(root / kLowJpegDir / name));
    t.uncompressed_low = to_rgb(read_png(root / kLowDir / name));
    t.bright = to_rgb(read_png(root / kBrightDir / name));
    if (!t.compressed_low.same_shape(t.bright) ||
        !t.uncompressed_low.same_shape(t.bright)) {
      fail(ErrorKind::kIngestion, "triplet " + e.id + " has mismatched shapes");
    }
    (e.split == Split::kTrain ? ds.train : ds.val).push_back(std::move(t));
  }
  return ds;
}

}  // namespace caplab
