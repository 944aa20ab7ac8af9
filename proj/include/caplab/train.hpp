#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "caplab/capformer.hpp"
#include "caplab/checkpoint.hpp"
#include "caplab/dataset.hpp"
#include "caplab/metrics.hpp"

namespace caplab {

enum class LrSchedule { kConstant, kCosine };

struct TrainConfig {
  Stage stage = Stage::kPretrain;
  int epochs = 2;
  int batch_size = 4;
  int patch_size = 64;
  double learning_rate = 2e-4;
  LrSchedule lr_schedule = LrSchedule::kCosine;
  std::uint64_t seed = 0;
  double eps_charbonnier = kCharbonnierEps;
  // Table-style ablation toggles. use_bgsa overrides the model config.
  bool use_pretrain = true;
  bool use_bgsa = true;
  // Validation metrics are recorded at epoch 0, every val_every epochs and
  // after the last epoch.
  int val_every = 1;
  bool augment = true;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate(const ModelConfig& model) const;
  std::map<std::string, std::string> to_fields() const;
};

std::string to_string(LrSchedule schedule);

// Which image of a triplet the loss compares against.
enum class Target { kUncompressedLow, kBright };

const Image& select_target(const DatasetTriplet& t, Target target);

struct TrainOptions {
  // When set, the ids of a batch that produced a non-finite loss are
  // written here before the run aborts.
  std::optional<std::filesystem::path> nan_dump_path;
  // Called after every epoch with the record just appended.
  std::function<void(const EpochRecord&)> on_epoch;
};

// Compression-aware pre-training: compressed low-light input, uncompressed
// low-light target.
Checkpoint pretrain(const Dataset& data, const ModelConfig& model,
                    const TrainConfig& train, const TrainOptions& options = {});

// Enhancement fine-tuning against the bright image. With init the whole
// network starts from its weights (stage "finetune"); without it training
// starts from random weights (stage "scratch").
Checkpoint finetune(const Dataset& data, const Checkpoint* init,
                    const ModelConfig& model, const TrainConfig& train,
                    const TrainOptions& options = {});

struct EvalEntry {
  std::string id;
  MetricRecord metrics;
};

struct EvalReport {
  std::vector<EvalEntry> images;
  MetricRecord mean;
};

using ImageModel = std::function<Image(const Image&)>;

// Full-image inference, clamp, metrics per image and their means.
EvalReport evaluate(const std::vector<DatasetTriplet>& split,
                    const ImageModel& model, Target target,
                    double eps = kCharbonnierEps);
EvalReport evaluate(const std::vector<DatasetTriplet>& split,
                    const Checkpoint& checkpoint, Target target);

// Columns: id,psnr_db,ssim,charbonnier; last row is "mean".
void write_eval_csv(std::ostream& out, const EvalReport& report);

struct GradCheckOptions {
  int height = 8;
  int width = 8;
  double step = 1e-5;
  std::uint64_t seed = 0;
  // Blacks out the top-left quadrant of the probe input so the brightness
  // mask has masked tokens whenever the token grid allows it.
  bool dark_quadrant = true;
  // Gradients are compared relative to max(|analytic|, |numeric|, floor).
  double relative_floor = 1e-6;
};

struct GradCheckEntry {
  std::string name;
  Eigen::Index index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct GradCheckReport {
  std::size_t param_count = 0;
  double max_relative_error = 0.0;
  bool passed = false;
  std::vector<GradCheckEntry> entries;
};

// Central finite differences of charbonnier(forward(x), t) against
// backprop on n_params randomly chosen scalar weights.
GradCheckReport grad_check(const ModelConfig& model, int n_params,
                           double tolerance, const GradCheckOptions& options = {});

// Single Adam update with step size lr.
void adam_step(nn::ParameterSet& params, const nn::ParameterSet& grads,
               AdamState& state, double lr, double beta1, double beta2,
               double eps);

double scheduled_lr(const TrainConfig& train, std::uint64_t step,
                    std::uint64_t total_steps);


// One arm of the pre-training / BGSA ablation grid.
struct AblationArm {
  bool use_pretrain = false;
  bool use_bgsa = false;
  std::string label() const;
};

// Rows in table order: baseline, +B, +P, +P+B.
std::vector<AblationArm> table2_arms();

struct AblationPlan {
  // Every arm gets total_epochs worth of gradient steps. Pre-trained arms
  // spend pretrain_epochs of them on the pre-training objective.
  int total_epochs = 30;
  int pretrain_epochs = 10;
  std::vector<std::uint64_t> seeds{0};
};

struct AblationRun {
  AblationArm arm;
  std::uint64_t seed = 0;
  double val_psnr = 0.0;
  double val_ssim = 0.0;
};

struct AblationRow {
  AblationArm arm;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
};

struct AblationResult {
  std::vector<AblationRun> runs;
  std::vector<AblationRow> rows;
};

// Final validation metrics against the bright target for every arm and seed.
// train supplies everything except stage, epochs, seed and the toggles.
AblationResult run_ablation(const Dataset& data, const ModelConfig& model,
                            const TrainConfig& train, const AblationPlan& plan,
                            const std::function<void(const AblationRun&)>& on_run = {});

// Columns: baseline,P,B,psnr_db,ssim (flags as 1/0).
void write_ablation_csv(std::ostream& out, const AblationResult& result);
// Columns: arm,seed,psnr_db,ssim
void write_ablation_runs_csv(std::ostream& out, const AblationResult& result);

}  // namespace caplab
