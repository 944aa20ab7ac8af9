#include <ostream>

#include "caplab/error.hpp"
#include "caplab/format.hpp"
#include "caplab/train.hpp"

namespace caplab {

std::string AblationArm::label() const {
  if (!use_pretrain && !use_bgsa) return "baseline";
  std::string s;
  if (use_pretrain) s += "+P";
  if (use_bgsa) s += "+B";
  return s;
}

std::vector<AblationArm> table2_arms() {
  return {{false, false}, {false, true}, {true, false}, {true, true}};
}

AblationResult run_ablation(const Dataset& data, const ModelConfig& model,
                            const TrainConfig& train, const AblationPlan& plan,
                            const std::function<void(const AblationRun&)>& on_run) {
  if (plan.pretrain_epochs < 1 || plan.pretrain_epochs >= plan.total_epochs) {
    fail(ErrorKind::kInvalidConfig,
         "pretrain_epochs must lie in [1, epochs - 1] so both stages run");
  }
  if (plan.seeds.empty()) fail(ErrorKind::kInvalidConfig, "ablation needs at least one seed");
  if (data.val.empty()) fail(ErrorKind::kInvalidInput, "ablation needs a validation split");

  AblationResult result;
  for (const AblationArm& arm : table2_arms()) {
    AblationRow row{arm, 0.0, 0.0};
    for (const std::uint64_t seed : plan.seeds) {
      TrainConfig tc = train;
      tc.seed = seed;
      tc.use_bgsa = arm.use_bgsa;
      tc.use_pretrain = arm.use_pretrain;
      Checkpoint final_ckpt;
      if (arm.use_pretrain) {
        tc.stage = Stage::kPretrain;
        tc.epochs = plan.pretrain_epochs;
        const Checkpoint pre = pretrain(data, model, tc);
        tc.stage = Stage::kFinetune;
        tc.epochs = plan.total_epochs - plan.pretrain_epochs;
        final_ckpt = finetune(data, &pre, model, tc);
      } else {
        tc.stage = Stage::kScratch;
        tc.epochs = plan.total_epochs;
        final_ckpt = finetune(data, nullptr, model, tc);
      }
      const EvalReport report = evaluate(data.val, final_ckpt, Target::kBright);
      AblationRun run{arm, seed, report.mean.psnr, report.mean.ssim};
      if (on_run) on_run(run);
      result.runs.push_back(run);
      row.mean_psnr += run.val_psnr;
      row.mean_ssim += run.val_ssim;
    }
    row.mean_psnr /= static_cast<double>(plan.seeds.size());
    row.mean_ssim /= static_cast<double>(plan.seeds.size());
    result.rows.push_back(row);
  }
  return result;
}

void write_ablation_csv(std::ostream& out, const AblationResult& result) {
  out << "baseline,P,B,psnr_db,ssim\n";
  for (const auto& row : result.rows) {
    out << "1," << (row.arm.use_pretrain ? 1 : 0) << ',' << (row.arm.use_bgsa ? 1 : 0) << ','
        << format_real(row.mean_psnr) << ',' << format_real(row.mean_ssim) << '\n';
  }
}

void write_ablation_runs_csv(std::ostream& out, const AblationResult& result) {
  out << "arm,seed,psnr_db,ssim\n";
  for (const auto& run : result.runs) {
    out << run.arm.label() << ',' << run.seed << ',' << format_real(run.val_psnr) << ','
        << format_real(run.val_ssim) << '\n';
  }
}

}  // namespace caplab
