#include "caplab/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>

#include "caplab/error.hpp"
#include "caplab/format.hpp"

namespace caplab {

std::string to_string(LrSchedule schedule) {
  return schedule == LrSchedule::kCosine ? "cosine" : "constant";
}

void TrainConfig::validate(const ModelConfig& model) const {
  auto bad = [](const std::string& msg) { fail(ErrorKind::kInvalidConfig, msg); };
  if (epochs < 1) bad("epochs must be >= 1");
  if (batch_size < 1) bad("batch_size must be >= 1");
  if (patch_size < model.size_factor() || patch_size % model.size_factor() != 0) {
    bad("patch_size " + std::to_string(patch_size) + " must be a positive multiple of " +
        std::to_string(model.size_factor()));
  }
  if (!(learning_rate > 0.0)) bad("learning_rate must be positive");
  if (!(eps_charbonnier >= 0.0)) bad("eps_charbonnier must be >= 0");
  if (val_every < 1) bad("val_every must be >= 1");
}

std::map<std::string, std::string> TrainConfig::to_fields() const {
  return {
      {"stage", to_string(stage)},
      {"epochs", std::to_string(epochs)},
      {"batch_size", std::to_string(batch_size)},
      {"patch_size", std::to_string(patch_size)},
      {"learning_rate", format_real(learning_rate)},
      {"lr_schedule", to_string(lr_schedule)},
      {"seed", std::to_string(seed)},
      {"eps_charbonnier", format_real(eps_charbonnier)},
      {"use_pretrain", use_pretrain ? "true" : "false"},
      {"use_bgsa", use_bgsa ? "true" : "false"},
      {"val_every", std::to_string(val_every)},
      {"augment", augment ? "true" : "false"},
      {"adam_beta1", format_real(adam_beta1)},
      {"adam_beta2", format_real(adam_beta2)},
      {"adam_eps", format_real(adam_eps)},
  };
}

const Image& select_target(const DatasetTriplet& t, Target target) {
  return target == Target::kBright ? t.bright : t.uncompressed_low;
}

void adam_step(nn::ParameterSet& params, const nn::ParameterSet& grads,
               AdamState& state, double lr, double beta1, double beta2,
               double eps) {
  if (state.first_moment.size() != params.size()) {
    state.first_moment = params.zeros_like();
    state.second_moment = params.zeros_like();
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(beta1, t);
  const double correction2 = 1.0 - std::pow(beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment.entry(i).value;
    auto& v = state.second_moment.entry(i).value;
    const auto& g = grads.entry(i).value;
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.cwiseAbs2();
    params.entry(i).value.array() -=
        lr * (m.array() / correction1) /
        ((v.array() / correction2).sqrt() + eps);
  }
}

double scheduled_lr(const TrainConfig& train, std::uint64_t step,
                    std::uint64_t total_steps) {
  if (train.lr_schedule == LrSchedule::kConstant || total_steps == 0) {
    return train.learning_rate;
  }
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return 0.5 * train.learning_rate * (1.0 + std::cos(std::numbers::pi * progress));
}

namespace {

std::mt19937_64 data_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32), 0x5eedu};
  return std::mt19937_64(seq);
}

struct Sample {
  Image input;
  Image target;
};

Sample draw_patch(const DatasetTriplet& t, Target target, int patch,
                  bool augment, std::mt19937_64& rng) {
  const Image& in = t.compressed_low;
  const Image& tgt = select_target(t, target);
  if (in.height() < patch || in.width() < patch) {
    fail(ErrorKind::kInvalidInput, "triplet " + t.id + " is smaller than the patch size");
  }
  std::uniform_int_distribution<int> dy(0, in.height() - patch);
  std::uniform_int_distribution<int> dx(0, in.width() - patch);
  const int y0 = dy(rng);
  const int x0 = dx(rng);
  Sample s{crop(in, y0, x0, patch, patch), crop(tgt, y0, x0, patch, patch)};
  if (augment) {
    std::bernoulli_distribution coin(0.5);
    if (coin(rng)) {
      s.input = flip_horizontal(s.input);
      s.target = flip_horizontal(s.target);
    }
    if (coin(rng)) {
      s.input = flip_vertical(s.input);
      s.target = flip_vertical(s.target);
    }
  }
  return s;
}

Checkpoint run_training(const Dataset& data, const Checkpoint* init,
                        ModelConfig model_config, const TrainConfig& train,
                        Stage stage, Target target, const TrainOptions& options) {
  model_config.use_bgsa = train.use_bgsa;
  model_config.validate();
  train.validate(model_config);
  if (data.train.empty()) {
    fail(ErrorKind::kInvalidInput, "training split is empty");
  }

  CapFormer model(model_config);
  if (init) {
    if (!(init->model == model_config)) {
      fail(ErrorKind::kInvalidConfig,
           "initial checkpoint model config does not match the requested model");
    }
    model = init->make_model();
  } else {
    model.init_weights(train.seed);
  }

  Checkpoint ckpt;
  ckpt.model = model_config;
  ckpt.stage = stage;
  ckpt.seed = train.seed;
  ckpt.param_count = model.params().scalar_count();
  ckpt.history.eps_charbonnier = train.eps_charbonnier;
  for (const auto& [k, v] : model_config.to_fields()) ckpt.effective_config["model." + k] = v;
  for (const auto& [k, v] : train.to_fields()) ckpt.effective_config["train." + k] = v;
  ckpt.effective_config["train.stage"] = to_string(stage);

  const auto validate_now = [&](EpochRecord& rec) {
    if (data.val.empty()) return;
    const EvalReport report = evaluate(
        data.val, [&](const Image& x) { return model.forward(x); }, target,
        train.eps_charbonnier);
    rec.has_val = true;
    rec.val_psnr = report.mean.psnr;
    rec.val_ssim = report.mean.ssim;
    rec.val_charbonnier = report.mean.charbonnier;
  };

  std::mt19937_64 rng = data_rng(train.seed);
  const std::size_t n = data.train.size();
  const std::size_t batches_per_epoch = (n + train.batch_size - 1) / train.batch_size;
  const std::uint64_t total_steps = batches_per_epoch * static_cast<std::uint64_t>(train.epochs);

  nn::ParameterSet grads = model.params().zeros_like();
  AdamState adam;
  std::uint64_t step = 0;
  EpochRecord initial;
  bool have_initial_loss = false;
  std::vector<std::size_t> order(n);

  for (int epoch = 1; epoch <= train.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t begin = b * train.batch_size;
      const std::size_t end = std::min(n, begin + train.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      grads.set_zero();
      double batch_loss = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        const Sample s = draw_patch(data.train[order[i]], target, train.patch_size,
                                    train.augment, rng);
        CapFormer::Cache cache;
        const Image out = model.forward(s.input, &cache);
        batch_loss += charbonnier(out, s.target, train.eps_charbonnier) * inv_batch;
        Image dout = charbonnier_grad(out, s.target, train.eps_charbonnier);
        for (double& g : dout.data()) g *= inv_batch;
        model.backward(cache, dout, grads);
      }
      if (!std::isfinite(batch_loss) || !grads.all_finite()) {
        std::string ids;
        for (std::size_t i = begin; i < end; ++i) {
          ids += (ids.empty() ? "" : " ") + data.train[order[i]].id;
        }
        if (options.nan_dump_path) {
          std::ofstream dump(*options.nan_dump_path);
          dump << "epoch " << epoch << " batch " << b << "\n" << ids << "\n";
        }
        fail(ErrorKind::kNumeric, "non-finite loss at epoch " + std::to_string(epoch) +
                                      " batch " + std::to_string(b) + ": " + ids);
      }
      if (!have_initial_loss) {
        initial.epoch = 0;
        initial.train_loss = batch_loss;
        validate_now(initial);
        ckpt.history.epochs.push_back(initial);
        if (options.on_epoch) options.on_epoch(initial);
        have_initial_loss = true;
      }
      adam_step(model.params(), grads, adam, scheduled_lr(train, step, total_steps),
                train.adam_beta1, train.adam_beta2, train.adam_eps);
      ++step;
      epoch_loss += batch_loss;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(batches_per_epoch);
    if (epoch % train.val_every == 0 || epoch == train.epochs) validate_now(rec);
    ckpt.history.epochs.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
  }

  ckpt.params = model.params();
  ckpt.optimizer = std::move(adam);
  return ckpt;
}

}  // namespace

Checkpoint pretrain(const Dataset& data, const ModelConfig& model,
                    const TrainConfig& train, const TrainOptions& options) {
  if (train.stage != Stage::kPretrain) {
    fail(ErrorKind::kInvalidConfig, "pretrain called with stage " + to_string(train.stage));
  }
  return run_training(data, nullptr, model, train, Stage::kPretrain,
                      Target::kUncompressedLow, options);
}

Checkpoint finetune(const Dataset& data, const Checkpoint* init,
                    const ModelConfig& model, const TrainConfig& train,
                    const TrainOptions& options) {
  if (train.stage == Stage::kPretrain) {
    fail(ErrorKind::kInvalidConfig, "finetune called with stage pretrain");
  }
  return run_training(data, init, model, train,
                      init ? Stage::kFinetune : Stage::kScratch, Target::kBright, options);
}

EvalReport evaluate(const std::vector<DatasetTriplet>& split, const ImageModel& model,
                    Target target, double eps) {
  if (split.empty()) fail(ErrorKind::kInvalidInput, "evaluation split is empty");
  EvalReport report;
  for (const auto& t : split) {
    const Image pred = model(t.compressed_low);
    const Image& gt = select_target(t, target);
    if (!pred.same_shape(gt)) {
      fail(ErrorKind::kInvalidInput, "prediction for " + t.id + " has the wrong shape");
    }
    report.images.push_back({t.id, evaluate_metrics(pred, gt, eps)});
  }
  const double n = static_cast<double>(report.images.size());
  for (const auto& e : report.images) {
    report.mean.psnr += e.metrics.psnr;
    report.mean.ssim += e.metrics.ssim;
    report.mean.charbonnier += e.metrics.charbonnier;
  }
  report.mean.psnr /= n;
  report.mean.ssim /= n;
  report.mean.charbonnier /= n;
  return report;
}

EvalReport evaluate(const std::vector<DatasetTriplet>& split,
                    const Checkpoint& checkpoint, Target target) {
  const CapFormer model = checkpoint.make_model();
  return evaluate(split, [&](const Image& x) { return model.forward(x); }, target,
                  checkpoint.history.eps_charbonnier > 0.0
                      ? checkpoint.history.eps_charbonnier
                      : kCharbonnierEps);
}

void write_eval_csv(std::ostream& out, const EvalReport& report) {
  out << "id,psnr_db,ssim,charbonnier\n";
  for (const auto& e : report.images) {
    out << e.id << ',' << format_real(e.metrics.psnr) << ',' << format_real(e.metrics.ssim)
        << ',' << format_real(e.metrics.charbonnier) << '\n';
  }
  out << "mean," << format_real(report.mean.psnr) << ',' << format_real(report.mean.ssim)
      << ',' << format_real(report.mean.charbonnier) << '\n';
}

GradCheckReport grad_check(const ModelConfig& model_config, int n_params,
                           double tolerance, const GradCheckOptions& options) {
  CapFormer model(model_config);
  model.init_weights(options.seed);
  GradCheckReport report;
  report.param_count = model.params().scalar_count();

  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image input(options.height, options.width, 3);
  Image target(options.height, options.width, 3);
  for (int y = 0; y < options.height; ++y) {
    for (int x = 0; x < options.width; ++x) {
      const bool dark = options.dark_quadrant && y < options.height / 2 &&
                        x < options.width / 2;
      for (int c = 0; c < 3; ++c) {
        input.at(y, x, c) = dark ? 0.0 : u(rng);
        target.at(y, x, c) = u(rng);
      }
    }
  }

  nn::ParameterSet grads = model.params().zeros_like();
  CapFormer::Cache cache;
  const Image out = model.forward(input, &cache);
  model.backward(cache, charbonnier_grad(out, target), grads);

  // Flat index over every scalar, sampled without replacement.
  std::vector<std::pair<std::size_t, Eigen::Index>> scalars;
  for (std::size_t e = 0; e < model.params().size(); ++e) {
    for (Eigen::Index i = 0; i < model.params().entry(e).value.size(); ++i) {
      scalars.emplace_back(e, i);
    }
  }
  std::shuffle(scalars.begin(), scalars.end(), rng);
  scalars.resize(std::min<std::size_t>(scalars.size(), static_cast<std::size_t>(n_params)));

  for (const auto& [e, i] : scalars) {
    double& w = model.params().entry(e).value[i];
    const double original = w;
    w = original + options.step;
    const double plus = charbonnier(model.forward(input), target);
    w = original - options.step;
    const double minus = charbonnier(model.forward(input), target);
    w = original;
    GradCheckEntry entry;
    entry.name = model.params().entry(e).name;
    entry.index = i;
    entry.analytic = grads.entry(e).value[i];
    entry.numeric = (plus - minus) / (2.0 * options.step);
    entry.relative_error =
        std::abs(entry.analytic - entry.numeric) /
        std::max({std::abs(entry.analytic), std::abs(entry.numeric), options.relative_floor});
    report.max_relative_error = std::max(report.max_relative_error, entry.relative_error);
    report.entries.push_back(entry);
  }
  report.passed = report.max_relative_error < tolerance;
  return report;
}

}  // namespace caplab
