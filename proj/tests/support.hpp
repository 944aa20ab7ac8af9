#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "caplab/image.hpp"

namespace testing {

inline caplab::Image random_image(int h, int w, int c, std::uint64_t seed, double lo = 0.0,
                                  double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  caplab::Image img(h, w, c);
  for (double& v : img.data()) v = u(rng);
  return img;
}

inline caplab::GrayImage random_gray(int h, int w, std::uint64_t seed, double lo = 0.0,
                                     double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  caplab::GrayImage img(h, w);
  for (double& v : img.data()) v = u(rng);
  return img;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("caplab_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::FILE* f = std::fopen(p.string().c_str(), "rb");
  if (!f) return {};
  std::string s;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) s.append(buf, n);
  std::fclose(f);
  return s;
}

}  // namespace testing
