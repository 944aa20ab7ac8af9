#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "caplab/capformer.hpp"
#include "caplab/nn.hpp"

namespace caplab {

enum class Stage { kPretrain, kFinetune, kScratch };

std::string to_string(Stage stage);
Stage parse_stage(const std::string& text);

struct EpochRecord {
  int epoch = 0;  // 0 is the state before the first update
  double train_loss = 0.0;
  bool has_val = false;
  double val_psnr = 0.0;
  double val_ssim = 0.0;
  double val_charbonnier = 0.0;
};

struct TrainHistory {
  double eps_charbonnier = 0.0;
  std::vector<EpochRecord> epochs;
};

// Columns: epoch,train_loss,val_psnr,val_ssim,val_charbonnier
void write_history_csv(std::ostream& out, const TrainHistory& history);

struct AdamState {
  std::uint64_t step = 0;
  nn::ParameterSet first_moment;
  nn::ParameterSet second_moment;
};

struct Checkpoint {
  ModelConfig model;
  Stage stage = Stage::kScratch;
  std::uint64_t seed = 0;
  std::size_t param_count = 0;
  nn::ParameterSet params;
  AdamState optimizer;
  TrainHistory history;
  std::map<std::string, std::string> effective_config;

  CapFormer make_model() const;
};

// Binary layout (little endian), version 1:
//   "CAPLABCK" | u32 version
//   u32 n, n x (str key, str value)        metadata: stage, seed, model.*,
//                                          config.*, param_count
//   str history_csv
//   u32 n, n x tensor                      parameters
//   u64 adam_step, u32 n, 2n x tensor      first moments then second
// str = u32 length + bytes; tensor = str name, u32 rank, rank x i32 dims,
// f64 data.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace caplab
