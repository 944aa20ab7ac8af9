#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "caplab/checkpoint.hpp"
#include "caplab/dataset.hpp"
#include "caplab/error.hpp"
#include "caplab/image_io.hpp"
#include "caplab/scene.hpp"
#include "caplab/train.hpp"
#include "support.hpp"

using namespace caplab;
namespace fs = std::filesystem;

namespace {

// 10 scenes -> 8 train / 2 val triplets.
const Dataset& toy_data() {
  static const Dataset data = [] {
    const fs::path bright = testing::scratch_dir("train_bright");
    for (int i = 0; i < 10; ++i) {
      write_png(bright / ("s" + std::to_string(i) + ".png"), procedural_scene(32, 32, static_cast<std::uint64_t>(i)));
    }
    const fs::path root = testing::scratch_dir("train_ds");
    synthesize_dataset(bright, root, SynthOptions{});
    return load_dataset(root);
  }();
  return data;
}

ModelConfig small_model() {
  ModelConfig c;
  c.base_channels = 8;
  c.num_downsamples = 3;
  c.num_bgvit_blocks = 2;
  c.num_heads = 4;
  return c;
}

TrainConfig short_run(Stage stage) {
  TrainConfig t;
  t.stage = stage;
  t.epochs = 2;
  t.batch_size = 2;
  t.patch_size = 32;
  t.learning_rate = 1e-3;
  t.seed = 3;
  return t;
}

std::string checkpoint_bytes(const Checkpoint& ckpt, const std::string& name) {
  const fs::path p = testing::scratch_dir(name) / "c.bin";
  save_checkpoint(p, ckpt);
  return testing::read_file(p);
}

}  // namespace

TEST_CASE("pre-training lowers the training loss") {
  const Checkpoint ckpt = pretrain(toy_data(), small_model(), short_run(Stage::kPretrain));
  CHECK(ckpt.stage == Stage::kPretrain);
  REQUIRE(ckpt.history.epochs.size() == 3);
  CHECK(ckpt.history.epochs[0].epoch == 0);
  CHECK(ckpt.history.epochs.back().train_loss < ckpt.history.epochs.front().train_loss);
  CHECK(ckpt.history.eps_charbonnier == 1e-3);
  CHECK(ckpt.param_count == param_count(small_model()));
  for (const auto& r : ckpt.history.epochs) CHECK(r.has_val);
}

TEST_CASE("pretrain refuses other stages and empty data") {
  CHECK_THROWS_AS(pretrain(toy_data(), small_model(), short_run(Stage::kFinetune)), Error);
  Dataset empty;
  CHECK_THROWS_AS(pretrain(empty, small_model(), short_run(Stage::kPretrain)), Error);
  TrainConfig bad_patch = short_run(Stage::kPretrain);
  bad_patch.patch_size = 20;
  CHECK_THROWS_AS(pretrain(toy_data(), small_model(), bad_patch), Error);
  TrainConfig no_epochs = short_run(Stage::kPretrain);
  no_epochs.epochs = 0;
  CHECK_THROWS_AS(pretrain(toy_data(), small_model(), no_epochs), Error);
}

TEST_CASE("training is deterministic in the seed") {
  const TrainConfig cfg = short_run(Stage::kPretrain);
  const Checkpoint a = pretrain(toy_data(), small_model(), cfg);
  const Checkpoint b = pretrain(toy_data(), small_model(), cfg);
  for (std::size_t i = 0; i < a.params.size(); ++i) CHECK(a.params.entry(i).value == b.params.entry(i).value);
  CHECK(checkpoint_bytes(a, "det_a") == checkpoint_bytes(b, "det_b"));

  TrainConfig other = cfg;
  other.seed = 4;
  const Checkpoint c = pretrain(toy_data(), small_model(), other);
  CHECK_FALSE(c.params.entry(0).value == a.params.entry(0).value);
}

TEST_CASE("fine-tuning from a checkpoint versus from scratch") {
  const Checkpoint pre = pretrain(toy_data(), small_model(), short_run(Stage::kPretrain));
  const Checkpoint ft = finetune(toy_data(), &pre, small_model(), short_run(Stage::kFinetune));
  const Checkpoint scratch = finetune(toy_data(), nullptr, small_model(), short_run(Stage::kScratch));
  CHECK(ft.stage == Stage::kFinetune);
  CHECK(scratch.stage == Stage::kScratch);
  CHECK(ft.history.epochs[0].val_charbonnier != scratch.history.epochs[0].val_charbonnier);
  CHECK(ft.history.epochs.back().train_loss < ft.history.epochs.front().train_loss);
  CHECK(scratch.history.epochs.back().train_loss < scratch.history.epochs.front().train_loss);

  // step-0 validation of the fine-tune run is the pre-trained model on bright targets
  const EvalReport pre_on_bright = evaluate(toy_data().val, pre, Target::kBright);
  CHECK(ft.history.epochs[0].val_psnr == doctest::Approx(pre_on_bright.mean.psnr).epsilon(1e-12));
}

TEST_CASE("baseline configuration of the ablation") {
  TrainConfig cfg = short_run(Stage::kScratch);
  cfg.use_bgsa = false;
  cfg.use_pretrain = false;
  cfg.epochs = 1;
  const Checkpoint base = finetune(toy_data(), nullptr, small_model(), cfg);
  CHECK(base.stage == Stage::kScratch);
  CHECK_FALSE(base.model.use_bgsa);
  CHECK(base.effective_config.at("train.use_pretrain") == "false");
  CHECK(base.effective_config.at("train.use_bgsa") == "false");
  CHECK(base.effective_config.at("model.use_bgsa") == "false");
}

TEST_CASE("fine-tuning rejects a mismatched architecture") {
  TrainConfig cfg = short_run(Stage::kPretrain);
  cfg.epochs = 1;
  const Checkpoint pre = pretrain(toy_data(), small_model(), cfg);
  ModelConfig other = small_model();
  other.base_channels = 4;
  try {
    finetune(toy_data(), &pre, other, short_run(Stage::kFinetune));
    FAIL("expected a config mismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kInvalidConfig);
  }
}

TEST_CASE("non-finite loss aborts with the batch ids") {
  Dataset data = toy_data();
  data.train[0].compressed_low.data()[5] = std::nan("");
  const fs::path dump = testing::scratch_dir("nan") / "nan_batch.txt";
  TrainConfig cfg = short_run(Stage::kPretrain);
  cfg.batch_size = 8;
  cfg.augment = false;
  TrainOptions opts;
  opts.nan_dump_path = dump;
  try {
    pretrain(data, small_model(), cfg, opts);
    FAIL("expected a numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNumeric);
    CHECK(std::string(e.what()).find(data.train[0].id) != std::string::npos);
  }
  CHECK(testing::read_file(dump).find(data.train[0].id) != std::string::npos);
}

TEST_CASE("evaluation") {
  std::vector<DatasetTriplet> split;
  for (int i = 0; i < 3; ++i) {
    DatasetTriplet t;
    t.id = "t" + std::to_string(i);
    t.bright = testing::random_image(16, 16, 3, static_cast<std::uint64_t>(i));
    t.compressed_low = t.bright;
    t.uncompressed_low = t.bright;
    split.push_back(t);
  }
  const EvalReport same = evaluate(split, [](const Image& x) { return x; }, Target::kBright);
  CHECK(same.mean.psnr == kPsnrCapDb);
  CHECK(same.mean.ssim == doctest::Approx(1.0).epsilon(1e-12));

  const ImageModel dim = [](const Image& x) {
    Image y = x;
    for (double& v : y.data()) v *= 0.8;
    return y;
  };
  const EvalReport r = evaluate(split, dim, Target::kBright);
  REQUIRE(r.images.size() == 3);
  double p = 0, s = 0, c = 0;
  for (const auto& e : r.images) {
    const MetricRecord direct = evaluate_metrics(dim(split[&e - &r.images[0]].compressed_low), split[&e - &r.images[0]].bright);
    CHECK(e.metrics.psnr == direct.psnr);
    p += e.metrics.psnr;
    s += e.metrics.ssim;
    c += e.metrics.charbonnier;
  }
  CHECK(std::abs(r.mean.psnr - p / 3) < 1e-12);
  CHECK(std::abs(r.mean.ssim - s / 3) < 1e-12);
  CHECK(std::abs(r.mean.charbonnier - c / 3) < 1e-12);

  std::ostringstream csv;
  write_eval_csv(csv, r);
  CHECK(csv.str().rfind("id,psnr_db,ssim,charbonnier\nt0,", 0) == 0);
  CHECK(csv.str().find("\nmean,") != std::string::npos);
}

TEST_CASE("a pre-trained model is closer to the low-light target than to the bright one") {
  TrainConfig cfg = short_run(Stage::kPretrain);
  cfg.epochs = 4;
  const Checkpoint pre = pretrain(toy_data(), small_model(), cfg);
  const EvalReport low = evaluate(toy_data().val, pre, Target::kUncompressedLow);
  const EvalReport bright = evaluate(toy_data().val, pre, Target::kBright);
  CHECK(low.mean.charbonnier < bright.mean.charbonnier);
}

TEST_CASE("checkpoint round trip is exact") {
  TrainConfig cfg = short_run(Stage::kPretrain);
  cfg.epochs = 1;
  const Checkpoint a = pretrain(toy_data(), small_model(), cfg);
  const fs::path dir = testing::scratch_dir("ckpt");
  save_checkpoint(dir / "a.bin", a);
  const Checkpoint b = load_checkpoint(dir / "a.bin");
  CHECK(b.model == a.model);
  CHECK(b.stage == a.stage);
  CHECK(b.seed == a.seed);
  CHECK(b.param_count == a.param_count);
  CHECK(b.effective_config == a.effective_config);
  CHECK(b.history.eps_charbonnier == a.history.eps_charbonnier);
  REQUIRE(b.history.epochs.size() == a.history.epochs.size());
  for (std::size_t i = 0; i < a.history.epochs.size(); ++i) {
    CHECK(b.history.epochs[i].train_loss == a.history.epochs[i].train_loss);
    CHECK(b.history.epochs[i].val_psnr == a.history.epochs[i].val_psnr);
  }
  REQUIRE(b.params.size() == a.params.size());
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    CHECK(b.params.entry(i).name == a.params.entry(i).name);
    CHECK(b.params.entry(i).shape == a.params.entry(i).shape);
    CHECK(b.params.entry(i).value == a.params.entry(i).value);
    CHECK(b.optimizer.first_moment.entry(i).value == a.optimizer.first_moment.entry(i).value);
    CHECK(b.optimizer.second_moment.entry(i).value == a.optimizer.second_moment.entry(i).value);
  }
  CHECK(b.optimizer.step == a.optimizer.step);
  save_checkpoint(dir / "b.bin", b);
  CHECK(testing::read_file(dir / "a.bin") == testing::read_file(dir / "b.bin"));

  const Image x = testing::random_image(24, 24, 3, 1);
  CHECK(a.make_model().forward(x) == b.make_model().forward(x));

  std::ofstream(dir / "junk.bin") << "CAPLABCK but not really";
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.bin"), Error);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.bin"), Error);
}

TEST_CASE("history csv") {
  TrainHistory h;
  h.eps_charbonnier = 1e-3;
  h.epochs.push_back({0, 0.5, true, 20.0, 0.5, 0.4});
  h.epochs.push_back({1, 0.25, false, 0, 0, 0});
  std::ostringstream out;
  write_history_csv(out, h);
  CHECK(out.str() == "epoch,train_loss,val_psnr,val_ssim,val_charbonnier\n0,0.5,20,0.5,0.4\n1,0.25,,,\n");
}

TEST_CASE("adam step and learning-rate schedule") {
  nn::ParameterSet p;
  p.add("w", {2});
  p.entry(0).value << 1.0, -2.0;
  nn::ParameterSet g = p.zeros_like();
  g.entry(0).value << 0.5, -0.1;
  AdamState state{0, p.zeros_like(), p.zeros_like()};
  adam_step(p, g, state, 0.01, 0.9, 0.999, 1e-8);
  // first step: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps)
  CHECK(std::abs(p.entry(0).value[0] - (1.0 - 0.01 * 0.5 / (0.5 + 1e-8))) < 1e-15);
  CHECK(std::abs(p.entry(0).value[1] - (-2.0 + 0.01 * 0.1 / (0.1 + 1e-8))) < 1e-15);
  CHECK(state.step == 1);

  adam_step(p, g, state, 0.01, 0.9, 0.999, 1e-8);
  const double m = 0.9 * 0.05 + 0.1 * 0.5, v = 0.999 * 0.001 * 0.25 + 0.001 * 0.25;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  CHECK(std::abs(p.entry(0).value[0] - (1.0 - 0.01 * 0.5 / (0.5 + 1e-8) - 0.01 * mh / (std::sqrt(vh) + 1e-8))) < 1e-14);

  TrainConfig t;
  t.learning_rate = 0.1;
  t.lr_schedule = LrSchedule::kCosine;
  CHECK(scheduled_lr(t, 0, 10) == 0.1);
  CHECK(std::abs(scheduled_lr(t, 5, 10) - 0.05) < 1e-15);
  CHECK(scheduled_lr(t, 9, 10) < scheduled_lr(t, 8, 10));
  CHECK(scheduled_lr(t, 9, 10) > 0.0);
  t.lr_schedule = LrSchedule::kConstant;
  CHECK(scheduled_lr(t, 7, 10) == 0.1);
}

TEST_CASE("ablation grid") {
  const auto arms = table2_arms();
  REQUIRE(arms.size() == 4);
  CHECK(arms[0].label() == "baseline");
  CHECK(arms[1].label() == "+B");
  CHECK(arms[2].label() == "+P");
  CHECK(arms[3].label() == "+P+B");

  AblationPlan plan;
  plan.total_epochs = 2;
  plan.pretrain_epochs = 1;
  plan.seeds = {0};
  TrainConfig cfg = short_run(Stage::kScratch);
  cfg.batch_size = 4;
  const AblationResult r = run_ablation(toy_data(), small_model(), cfg, plan);
  CHECK(r.runs.size() == 4);
  REQUIRE(r.rows.size() == 4);
  std::ostringstream csv;
  write_ablation_csv(csv, r);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "baseline,P,B,psnr_db,ssim");
  std::getline(lines, line);
  CHECK(line.rfind("1,0,0,", 0) == 0);
  std::getline(lines, line);
  CHECK(line.rfind("1,0,1,", 0) == 0);
  std::getline(lines, line);
  CHECK(line.rfind("1,1,0,", 0) == 0);
  std::getline(lines, line);
  CHECK(line.rfind("1,1,1,", 0) == 0);

  plan.pretrain_epochs = 2;
  CHECK_THROWS_AS(run_ablation(toy_data(), small_model(), cfg, plan), Error);
}
