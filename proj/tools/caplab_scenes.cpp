// Writes procedural bright scenes, a stand-in source set for `caplab synth`.
#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "caplab/error.hpp"
#include "caplab/image_io.hpp"
#include "caplab/scene.hpp"

int main(int argc, char** argv) {
  CLI::App app{"procedural bright scenes for caplab synth", "caplab-scenes"};
  std::string out;
  int count = 40;
  int size = 96;
  std::uint64_t seed = 0;
  app.add_option("--out", out, "output directory")->required();
  app.add_option("--count", count, "number of scenes")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--size", size, "side length in pixels")->capture_default_str()->check(CLI::Range(8, 4096));
  app.add_option("--seed", seed, "scene seed")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    std::filesystem::create_directories(out);
    for (int i = 0; i < count; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "scene_%03d.png", i);
      caplab::write_png(std::filesystem::path(out) / name,
                        caplab::procedural_scene(size, size, seed * 1000003ULL + static_cast<std::uint64_t>(i)));
    }
  } catch (const caplab::Error& e) {
    std::cerr << "error[" << caplab::to_string(e.kind()) << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[io]: " << e.what() << '\n';
    return 1;
  }
  std::cout << "wrote " << count << " scenes to " << out << '\n';
  return 0;
}
