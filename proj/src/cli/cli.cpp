#include "caplab/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "caplab/checkpoint.hpp"
#include "caplab/dataset.hpp"
#include "caplab/error.hpp"
#include "caplab/format.hpp"
#include "caplab/image_io.hpp"
#include "caplab/jpeg.hpp"
#include "caplab/kv_config.hpp"
#include "caplab/plot.hpp"
#include "caplab/scene.hpp"
#include "caplab/train.hpp"

namespace fs = std::filesystem;

namespace caplab::cli {
namespace {

constexpr const char* kEnvDataDir = "CAPLAB_DATA_DIR";
constexpr const char* kEffectiveConfigName = "effective_config.txt";

// Bad flags or a bad config file. Reported with exit code 2.
struct UsageError : std::runtime_error {
  UsageError(std::string category, const std::string& msg)
      : std::runtime_error(msg), category(std::move(category)) {}
  std::string category;
};

enum class ValueKind { kInt, kUInt, kReal, kBool, kText };

struct KeySpec {
  std::string name;
  ValueKind kind;
  std::string fallback;
};

bool value_ok(ValueKind kind, const std::string& v) {
  const char* first = v.data();
  const char* last = v.data() + v.size();
  switch (kind) {
    case ValueKind::kInt: {
      long long x = 0;
      auto r = std::from_chars(first, last, x);
      return r.ec == std::errc() && r.ptr == last;
    }
    case ValueKind::kUInt: {
      unsigned long long x = 0;
      auto r = std::from_chars(first, last, x);
      return r.ec == std::errc() && r.ptr == last;
    }
    case ValueKind::kReal: {
      double x = 0;
      auto r = std::from_chars(first, last, x);
      return r.ec == std::errc() && r.ptr == last;
    }
    case ValueKind::kBool:
      try {
        parse_bool(v);
        return true;
      } catch (const Error&) {
        return false;
      }
    case ValueKind::kText:
      return !v.empty();
  }
  return false;
}

const char* kind_name(ValueKind kind) {
  switch (kind) {
    case ValueKind::kInt: return "an integer";
    case ValueKind::kUInt: return "a non-negative integer";
    case ValueKind::kReal: return "a number";
    case ValueKind::kBool: return "true or false";
    case ValueKind::kText: return "a value";
  }
  return "a value";
}

std::vector<KeySpec> model_keys() {
  const ModelConfig d;
  return {
      {"base_channels", ValueKind::kInt, std::to_string(d.base_channels)},
      {"num_downsamples", ValueKind::kInt, std::to_string(d.num_downsamples)},
      {"num_bgvit_blocks", ValueKind::kInt, std::to_string(d.num_bgvit_blocks)},
      {"num_heads", ValueKind::kInt, std::to_string(d.num_heads)},
      {"mlp_ratio", ValueKind::kReal, format_real(d.mlp_ratio)},
      {"mask_sigma", ValueKind::kReal, format_real(d.mask_sigma)},
      {"mask_tau", ValueKind::kReal, format_real(d.mask_tau)},
      {"positional_embedding", ValueKind::kBool, d.positional_embedding ? "true" : "false"},
      {"activation", ValueKind::kText, "gelu"},
  };
}

std::vector<KeySpec> train_keys() {
  const TrainConfig d;
  return {
      {"seed", ValueKind::kUInt, std::to_string(d.seed)},
      {"epochs", ValueKind::kInt, std::to_string(d.epochs)},
      {"lr", ValueKind::kReal, format_real(d.learning_rate)},
      {"batch", ValueKind::kInt, std::to_string(d.batch_size)},
      {"patch", ValueKind::kInt, std::to_string(d.patch_size)},
      {"lr_schedule", ValueKind::kText, to_string(d.lr_schedule)},
      {"eps_charbonnier", ValueKind::kReal, format_real(d.eps_charbonnier)},
      {"use_bgsa", ValueKind::kBool, d.use_bgsa ? "true" : "false"},
      {"val_every", ValueKind::kInt, std::to_string(d.val_every)},
      {"augment", ValueKind::kBool, d.augment ? "true" : "false"},
      {"adam_beta1", ValueKind::kReal, format_real(d.adam_beta1)},
      {"adam_beta2", ValueKind::kReal, format_real(d.adam_beta2)},
      {"adam_eps", ValueKind::kReal, format_real(d.adam_eps)},
  };
}

void append(std::vector<KeySpec>& to, const std::vector<KeySpec>& from) {
  to.insert(to.end(), from.begin(), from.end());
}

void set_fallback(std::vector<KeySpec>& keys, const std::string& name, const std::string& value) {
  for (auto& k : keys) {
    if (k.name == name) k.fallback = value;
  }
}

const KeySpec* find_key(const std::vector<KeySpec>& keys, const std::string& name) {
  for (const auto& k : keys) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

// Merged view of defaults < config file < flags.
class Settings {
 public:
  std::string text(const std::string& key) const { return values_.at(key); }
  int integer(const std::string& key) const { return std::stoi(values_.at(key)); }
  std::uint64_t unsigned_integer(const std::string& key) const {
    return std::stoull(values_.at(key));
  }
  double real(const std::string& key) const { return std::stod(values_.at(key)); }
  bool boolean(const std::string& key) const { return parse_bool(values_.at(key)); }
  // Set by the config file or a flag rather than defaulted.
  bool explicit_key(const std::string& key) const { return explicit_.contains(key); }

  std::map<std::string, std::string> values_;
  std::set<std::string> explicit_;
};

// A flag that feeds a settings key.
struct FlagBinding {
  std::string key;
  CLI::Option* option = nullptr;
  std::string value;
};

struct Command {
  std::vector<KeySpec> keys;
  std::string config_path;
  std::vector<std::unique_ptr<FlagBinding>> flags;
  // Path-like flags, echoed as comments.
  std::vector<std::pair<std::string, std::string*>> paths;
};

Settings resolve(const Command& cmd) {
  Settings s;
  for (const auto& k : cmd.keys) s.values_[k.name] = k.fallback;
  if (!cmd.config_path.empty()) {
    std::set<std::string> allowed;
    for (const auto& k : cmd.keys) allowed.insert(k.name);
    KeyValueConfig file;
    try {
      file = KeyValueConfig::load(cmd.config_path, allowed);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kIo) throw;
      throw UsageError("invalid-config", e.what());
    }
    for (const auto& [key, value] : file.values()) {
      const KeySpec* spec = find_key(cmd.keys, key);
      if (!value_ok(spec->kind, value)) {
        throw UsageError("invalid-config", cmd.config_path + ": " + key + " must be " +
                                               kind_name(spec->kind) + ", got '" + value + "'");
      }
      s.values_[key] = value;
      s.explicit_.insert(key);
    }
  }
  for (const auto& f : cmd.flags) {
    if (f->option->count() == 0) continue;
    const KeySpec* spec = find_key(cmd.keys, f->key);
    if (!value_ok(spec->kind, f->value)) {
      throw UsageError("usage", f->option->get_name() + " must be " + kind_name(spec->kind) +
                                    ", got '" + f->value + "'");
    }
    s.values_[f->key] = f->value;
    s.explicit_.insert(f->key);
  }
  return s;
}

void write_effective_config(const fs::path& dir, const std::string& subcommand,
                            const Command& cmd, const Settings& s) {
  fs::create_directories(dir);
  std::ofstream out(dir / kEffectiveConfigName);
  if (!out) fail(ErrorKind::kIo, "cannot write " + (dir / kEffectiveConfigName).string());
  out << "# caplab " << subcommand << '\n';
  for (const auto& [name, value] : cmd.paths) {
    if (!value->empty()) out << "# " << name << " = " << *value << '\n';
  }
  if (!cmd.config_path.empty()) out << "# config = " << cmd.config_path << '\n';
  for (const auto& k : cmd.keys) out << k.name << " = " << s.text(k.name) << '\n';
}

// -- settings -> library configs ------------------------------------------

ModelConfig model_from(const Settings& s, bool use_bgsa) {
  std::map<std::string, std::string> f;
  for (const auto& k : model_keys()) f[k.name] = s.text(k.name);
  f["use_bgsa"] = use_bgsa ? "true" : "false";
  f["input_channels"] = "3";
  ModelConfig m = ModelConfig::from_fields(f);
  m.validate();
  return m;
}

LrSchedule parse_schedule(const std::string& text) {
  if (text == "cosine") return LrSchedule::kCosine;
  if (text == "constant") return LrSchedule::kConstant;
  fail(ErrorKind::kInvalidConfig, "lr_schedule must be cosine or constant, got '" + text + "'");
}

TrainConfig train_from(const Settings& s, Stage stage) {
  TrainConfig t;
  t.stage = stage;
  t.seed = s.unsigned_integer("seed");
  t.epochs = s.integer("epochs");
  t.learning_rate = s.real("lr");
  t.batch_size = s.integer("batch");
  t.patch_size = s.integer("patch");
  t.lr_schedule = parse_schedule(s.text("lr_schedule"));
  t.eps_charbonnier = s.real("eps_charbonnier");
  t.use_bgsa = s.boolean("use_bgsa");
  t.val_every = s.integer("val_every");
  t.augment = s.boolean("augment");
  t.adam_beta1 = s.real("adam_beta1");
  t.adam_beta2 = s.real("adam_beta2");
  t.adam_eps = s.real("adam_eps");
  return t;
}

// Model keys given explicitly must agree with the checkpoint.
void check_model_keys(const Settings& s, const Checkpoint& ckpt) {
  const auto have = ckpt.model.to_fields();
  for (const auto& k : model_keys()) {
    if (!s.explicit_key(k.name)) continue;
    const std::string want = s.text(k.name);
    const std::string got = have.at(k.name);
    bool same = want == got;
    if (!same && k.kind != ValueKind::kText && k.kind != ValueKind::kBool) {
      same = std::stod(want) == std::stod(got);
    }
    if (k.kind == ValueKind::kBool) same = parse_bool(want) == parse_bool(got);
    if (!same) {
      fail(ErrorKind::kInvalidConfig, "config mismatch: " + k.name + " = " + want +
                                          " but the checkpoint has " + got);
    }
  }
}

fs::path require_dataset_root(const std::string& in) {
  if (in.empty()) {
    throw UsageError("usage", std::string("--in is required (or set ") + kEnvDataDir + ")");
  }
  return fs::path(in);
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::kIo, "write failed: " + path.string());
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

TrainOptions progress_options(std::ostream& out, const fs::path& out_dir) {
  TrainOptions opts;
  opts.nan_dump_path = out_dir / "nan_batch.txt";
  opts.on_epoch = [&out](const EpochRecord& r) {
    out << "epoch " << r.epoch << " train_loss=" << format_real(r.train_loss);
    if (r.has_val) {
      out << " val_psnr=" << format_real(r.val_psnr) << " val_ssim=" << format_real(r.val_ssim);
    }
    out << '\n';
  };
  return opts;
}

void save_run(const fs::path& out_dir, const Checkpoint& ckpt, std::ostream& out) {
  fs::create_directories(out_dir);
  save_checkpoint(out_dir / "checkpoint.bin", ckpt);
  std::ostringstream hist;
  write_history_csv(hist, ckpt.history);
  write_text_file(out_dir / "history.csv", hist.str());
  out << "wrote " << (out_dir / "checkpoint.bin").string() << " (stage " << to_string(ckpt.stage)
      << ", " << ckpt.param_count << " parameters)\n";
}

// -- minimal CSV reading for report ----------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
  }
  std::vector<double> numbers(const std::string& name) const {
    std::vector<double> v;
    const int c = column(name);
    if (c < 0) return v;
    for (const auto& r : rows) {
      if (static_cast<std::size_t>(c) >= r.size() || r[c].empty()) continue;
      try {
        v.push_back(std::stod(r[c]));
      } catch (const std::exception&) {
      }
    }
    return v;
  }
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot read " + path.string());
  CsvTable t;
  std::string line;
  if (std::getline(in, line)) t.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (!line.empty()) t.rows.push_back(split_csv_line(line));
  }
  return t;
}

// -- subcommands -----------------------------------------------------------

struct Io {
  std::ostream& out;
  std::ostream& err;
};

void run_synth(const Command& cmd, const Settings& s, const std::string& in,
               const std::string& out_dir, const Io& io) {
  SynthOptions opts;
  opts.qf = s.integer("qf");
  opts.seed = s.unsigned_integer("seed");
  opts.darken.gamma = s.real("gamma");
  opts.darken.gain = s.real("gain");
  opts.darken.noise_sigma = s.real("noise_sigma");
  opts.train_fraction = s.real("train_fraction");
  opts.subsampling = parse_subsampling(s.text("subsampling"));
  const Manifest m = synthesize_dataset(in, out_dir, opts);
  write_effective_config(out_dir, "synth", cmd, s);
  io.out << "wrote " << m.entries.size() << " triplets to " << out_dir << " ("
         << m.count(Split::kTrain) << " train, " << m.count(Split::kVal) << " val, qf "
         << m.qf << ")\n";
}

void run_analyze_loss(const Command& cmd, const Settings& s, const std::string& in,
                      const std::string& out_dir, const Io& io) {
  const int qf = s.integer("qf");
  const int bins = s.integer("bins");
  const jpeg::Subsampling sub = parse_subsampling(s.text("subsampling"));
  const bool want_map = s.boolean("loss_map");

  std::vector<fs::path> inputs;
  if (fs::is_directory(in)) {
    inputs = list_images(in);
    if (inputs.empty()) fail(ErrorKind::kInvalidInput, "no .png images in " + in);
  } else {
    if (!fs::exists(in)) fail(ErrorKind::kIo, "no such file: " + in);
    inputs.push_back(in);
  }
  fs::create_directories(out_dir);
  for (const auto& path : inputs) {
    const Image img = to_rgb(read_png(path));
    const Image decoded = jpeg::jpeg_roundtrip(img, qf, sub);
    const GrayImage lmap = jpeg::loss_map(img, decoded);
    const jpeg::LossReport report = jpeg::binned_loss_stats(img, lmap, bins, qf);
    std::ostringstream csv;
    jpeg::write_loss_report_csv(csv, report);
    const std::string stem = path.stem().string();
    write_text_file(fs::path(out_dir) / (stem + "_loss.csv"), csv.str());
    if (want_map) {
      double vmax = 0.0;
      for (double v : lmap.data()) vmax = std::max(vmax, v);
      write_png(fs::path(out_dir) / (stem + "_lossmap.png"), heatmap(lmap, vmax));
    }
    if (inputs.size() == 1) io.out << csv.str();
  }
  write_effective_config(out_dir, "analyze-loss", cmd, s);
  if (inputs.size() > 1) io.out << "analyzed " << inputs.size() << " images into " << out_dir << '\n';
}

void run_pretrain(const Command& cmd, const Settings& s, const std::string& in,
                  const std::string& out_dir, const Io& io) {
  const Dataset data = load_dataset(require_dataset_root(in));
  const TrainConfig tc = train_from(s, Stage::kPretrain);
  const ModelConfig mc = model_from(s, tc.use_bgsa);
  write_effective_config(out_dir, "pretrain", cmd, s);
  const Checkpoint ckpt = pretrain(data, mc, tc, progress_options(io.out, out_dir));
  save_run(out_dir, ckpt, io.out);
}

void run_finetune(Command& cmd, const std::string& in, const std::string& out_dir,
                  const std::string& checkpoint, const Io& io) {
  std::optional<Checkpoint> init;
  if (!checkpoint.empty()) {
    init = load_checkpoint(checkpoint);
    // The architecture defaults to the one being fine-tuned.
    const auto fields = init->model.to_fields();
    for (const auto& k : model_keys()) set_fallback(cmd.keys, k.name, fields.at(k.name));
  }
  const Settings s = resolve(cmd);
  const std::string mode = s.text("use_pretrain");
  bool use_pretrain = init.has_value();
  if (mode != "auto") {
    if (!value_ok(ValueKind::kBool, mode)) {
      throw UsageError("usage", "--use-pretrain must be true, false or auto, got '" + mode + "'");
    }
    use_pretrain = parse_bool(mode);
  }
  if (use_pretrain && !init) {
    throw UsageError("usage", "--use-pretrain true needs --checkpoint");
  }
  if (!use_pretrain && init) {
    io.err << "note: --use-pretrain false, ignoring " << checkpoint << " and training from scratch\n";
  }
  const Dataset data = load_dataset(require_dataset_root(in));
  TrainConfig tc = train_from(s, use_pretrain ? Stage::kFinetune : Stage::kScratch);
  tc.use_pretrain = use_pretrain;
  const ModelConfig mc = model_from(s, tc.use_bgsa);
  write_effective_config(out_dir, "finetune", cmd, s);
  const Checkpoint ckpt = finetune(data, use_pretrain ? &*init : nullptr, mc, tc,
                                   progress_options(io.out, out_dir));
  save_run(out_dir, ckpt, io.out);
}

void run_eval(const Command& cmd, const Settings& s, const std::string& in,
              const std::string& out_dir, const std::string& checkpoint, const Io& io) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  check_model_keys(s, ckpt);
  const Dataset data = load_dataset(require_dataset_root(in));

  const std::string target_name = s.text("target");
  Target target = ckpt.stage == Stage::kPretrain ? Target::kUncompressedLow : Target::kBright;
  if (target_name == "bright") {
    target = Target::kBright;
  } else if (target_name == "low") {
    target = Target::kUncompressedLow;
  } else if (target_name != "auto") {
    fail(ErrorKind::kInvalidConfig, "target must be auto, bright or low, got '" + target_name + "'");
  }
  const std::string split_name = s.text("split");
  std::vector<DatasetTriplet> split;
  if (split_name == "val" || split_name == "all") split.insert(split.end(), data.val.begin(), data.val.end());
  if (split_name == "train" || split_name == "all") {
    split.insert(split.end(), data.train.begin(), data.train.end());
  }
  if (split_name != "val" && split_name != "train" && split_name != "all") {
    fail(ErrorKind::kInvalidConfig, "split must be val, train or all, got '" + split_name + "'");
  }
  if (split.empty()) fail(ErrorKind::kInvalidInput, "split '" + split_name + "' is empty");

  const EvalReport report = evaluate(split, ckpt, target);
  std::ostringstream csv;
  write_eval_csv(csv, report);
  write_text_file(fs::path(out_dir) / "eval.csv", csv.str());
  write_effective_config(out_dir, "eval", cmd, s);
  io.out << "mean over " << report.images.size() << " images: psnr_db="
         << format_real(report.mean.psnr) << " ssim=" << format_real(report.mean.ssim)
         << " charbonnier=" << format_real(report.mean.charbonnier) << '\n';
}

void run_infer(const Command& cmd, const Settings& s, const std::string& in,
               const std::string& out, const std::string& checkpoint, const Io& io) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  check_model_keys(s, ckpt);
  if (ckpt.stage == Stage::kPretrain) {
    io.err << "warning: " << checkpoint
           << " is a pretrain-stage checkpoint; outputs are low-light restorations, not enhancements\n";
  }
  if (!fs::exists(in)) fail(ErrorKind::kIo, "no such file or directory: " + in);

  std::vector<std::pair<fs::path, fs::path>> jobs;
  fs::path echo_dir;
  if (fs::is_directory(in)) {
    const auto files = list_images(in);
    if (files.empty()) fail(ErrorKind::kInvalidInput, "no .png images in " + in);
    for (const auto& f : files) jobs.emplace_back(f, fs::path(out) / f.filename());
    echo_dir = out;
  } else {
    fs::path target = out;
    if (fs::is_directory(target) || !is_image_file(target)) target /= fs::path(in).filename();
    jobs.emplace_back(in, target);
    echo_dir = target.parent_path().empty() ? fs::path(".") : target.parent_path();
  }

  const CapFormer model = ckpt.make_model();
  fs::create_directories(echo_dir);
  for (const auto& [src, dst] : jobs) {
    const Image img = to_rgb(read_png(src));
    write_png(dst, clamp01(model.forward(img)));
  }
  write_effective_config(echo_dir, "infer", cmd, s);
  io.out << "wrote " << jobs.size() << (jobs.size() == 1 ? " image" : " images") << " to "
         << echo_dir.string() << '\n';
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    if (!value_ok(ValueKind::kUInt, item)) {
      fail(ErrorKind::kInvalidConfig, "ablate_seeds must be a comma separated list of seeds, got '" + text + "'");
    }
    seeds.push_back(std::stoull(item));
  }
  if (seeds.empty()) fail(ErrorKind::kInvalidConfig, "ablate_seeds is empty");
  return seeds;
}

// Procedural bright scenes run through synth, for ablate without a dataset.
fs::path build_toy_dataset(const fs::path& out_dir, int count, int size, std::uint64_t seed,
                           std::ostream& out) {
  const fs::path scenes = out_dir / "toy_scenes";
  const fs::path root = out_dir / "toy_dataset";
  fs::create_directories(scenes);
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%03d.png", i);
    write_png(scenes / name, procedural_scene(size, size, seed * 1000003ULL + static_cast<std::uint64_t>(i)));
  }
  SynthOptions opts;
  opts.seed = seed;
  synthesize_dataset(scenes, root, opts);
  out << "no dataset given, synthesized " << count << " procedural scenes into " << root.string() << '\n';
  return root;
}

void run_ablate(const Command& cmd, const Settings& s, const std::string& in,
                const std::string& out_dir, const std::string& preset, const Io& io) {
  if (preset != "table2") throw UsageError("usage", "unknown --preset '" + preset + "' (known: table2)");
  AblationPlan plan;
  plan.total_epochs = s.integer("epochs");
  plan.pretrain_epochs = s.integer("pretrain_epochs");
  plan.seeds = parse_seed_list(s.text("ablate_seeds"));
  const TrainConfig tc = train_from(s, Stage::kScratch);
  const ModelConfig mc = model_from(s, true);
  tc.validate(mc);

  write_effective_config(out_dir, "ablate", cmd, s);
  fs::path root;
  if (in.empty()) {
    root = build_toy_dataset(out_dir, s.integer("toy_scenes"), s.integer("toy_size"),
                             plan.seeds.front(), io.out);
  } else {
    root = in;
  }
  const Dataset data = load_dataset(root);
  const AblationResult result = run_ablation(data, mc, tc, plan, [&io](const AblationRun& r) {
    io.out << "arm " << r.arm.label() << " seed " << r.seed << ": psnr_db=" << format_real(r.val_psnr)
           << " ssim=" << format_real(r.val_ssim) << '\n';
  });
  std::ostringstream table;
  std::ostringstream runs;
  write_ablation_csv(table, result);
  write_ablation_runs_csv(runs, result);
  write_text_file(fs::path(out_dir) / "ablation.csv", table.str());
  write_text_file(fs::path(out_dir) / "ablation_runs.csv", runs.str());
  io.out << table.str();
}

void run_report(const Command& cmd, const Settings& s, const std::string& in,
                const std::string& out_arg, const Io& io) {
  const fs::path in_dir = in;
  const fs::path out_dir = out_arg.empty() ? in_dir / "report" : fs::path(out_arg);
  if (!fs::is_directory(in_dir)) fail(ErrorKind::kIo, "not a directory: " + in);
  fs::create_directories(out_dir);

  std::ostringstream summary;
  summary << "caplab report for " << in_dir.string() << "\n";
  int found = 0;

  if (fs::exists(in_dir / "history.csv")) {
    ++found;
    const CsvTable h = read_csv(in_dir / "history.csv");
    const auto epochs = h.numbers("epoch");
    const auto loss = h.numbers("train_loss");
    if (!loss.empty() && epochs.size() == loss.size()) {
      write_png(out_dir / "training_curve.png", line_plot({{epochs, loss, {0.8, 0.1, 0.1}}}));
      summary << "\ntraining_curve.png: train_loss (y) against epoch (x)\n";
      summary << "train_loss first=" << format_real(loss.front()) << " last=" << format_real(loss.back())
              << "\n";
    }
    std::vector<double> ve;
    std::vector<double> vp;
    const int ce = h.column("epoch");
    const int cp = h.column("val_psnr");
    for (const auto& r : h.rows) {
      if (ce < 0 || cp < 0 || static_cast<std::size_t>(cp) >= r.size() || r[cp].empty()) continue;
      ve.push_back(std::stod(r[ce]));
      vp.push_back(std::stod(r[cp]));
    }
    if (!vp.empty()) {
      write_png(out_dir / "val_psnr_curve.png", line_plot({{ve, vp, {0.1, 0.2, 0.8}}}));
      summary << "val_psnr_curve.png: validation PSNR in dB (y) against epoch (x)\n";
      summary << "val_psnr first=" << format_real(vp.front()) << " last=" << format_real(vp.back()) << "\n";
    }
  }

  if (fs::exists(in_dir / "eval.csv")) {
    ++found;
    const CsvTable e = read_csv(in_dir / "eval.csv");
    summary << "\neval.csv:\n";
    for (const auto& r : e.rows) {
      if (!r.empty() && r[0] == "mean") {
        summary << "mean psnr_db=" << (r.size() > 1 ? r[1] : "") << " ssim=" << (r.size() > 2 ? r[2] : "")
                << " charbonnier=" << (r.size() > 3 ? r[3] : "") << "\n";
      }
    }
  }

  if (fs::exists(in_dir / "ablation.csv")) {
    ++found;
    std::ifstream a(in_dir / "ablation.csv");
    summary << "\nablation.csv:\n" << a.rdbuf();
  }

  std::vector<fs::path> loss_reports;
  for (const auto& entry : fs::directory_iterator(in_dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.size() > 9 && name.ends_with("_loss.csv")) {
      loss_reports.push_back(entry.path());
    }
  }
  std::sort(loss_reports.begin(), loss_reports.end());
  for (const auto& path : loss_reports) {
    ++found;
    const CsvTable t = read_csv(path);
    const auto lo = t.numbers("bin_low");
    const auto hi = t.numbers("bin_high");
    const auto pix = t.numbers("pixel_fraction");
    const auto frac = t.numbers("loss_fraction");
    if (lo.size() != hi.size() || lo.size() != pix.size() || lo.size() != frac.size() || lo.empty()) continue;
    std::vector<double> centre(lo.size());
    for (std::size_t i = 0; i < lo.size(); ++i) centre[i] = 0.5 * (lo[i] + hi[i]);
    const std::string stem = path.stem().string();
    write_png(out_dir / (stem + "_bins.png"),
              line_plot({{centre, pix, {0.1, 0.2, 0.8}}, {centre, frac, {0.8, 0.1, 0.1}}}));
    summary << "\n" << stem << "_bins.png: pixel_fraction (blue) and loss_fraction (red) against luminance\n";
    double dark_pix = 0.0;
    double dark_loss = 0.0;
    for (std::size_t i = 0; i < lo.size(); ++i) {
      if (hi[i] <= 0.3 + 1e-12) {
        dark_pix += pix[i];
        dark_loss += frac[i];
      }
    }
    summary << "luminance <= 0.3 holds " << format_real(dark_pix) << " of pixels and "
            << format_real(dark_loss) << " of absolute loss\n";
  }

  if (found == 0) {
    fail(ErrorKind::kInvalidInput,
         "nothing to report in " + in + " (expected history.csv, eval.csv, ablation.csv or *_loss.csv)");
  }
  write_text_file(out_dir / "report.txt", summary.str());
  write_effective_config(out_dir, "report", cmd, s);
  io.out << summary.str();
}

// -- wiring ----------------------------------------------------------------

void add_setting_flag(CLI::App* app, Command& cmd, const std::string& flag, const std::string& key,
                      const std::string& help) {
  const KeySpec* spec = find_key(cmd.keys, key);
  auto binding = std::make_unique<FlagBinding>();
  binding->key = key;
  binding->option = app->add_option(flag, binding->value, help);
  binding->option->default_str(spec->fallback);
  binding->option->type_name(spec->kind == ValueKind::kBool ? "BOOL"
                             : spec->kind == ValueKind::kReal ? "FLOAT"
                             : spec->kind == ValueKind::kText ? "TEXT"
                                                              : "INT");
  cmd.flags.push_back(std::move(binding));
}

void add_config_flag(CLI::App* app, Command& cmd) {
  app->add_option("--config", cmd.config_path, "key = value settings file (flags override it)")
      ->default_str("none")
      ->check(CLI::ExistingFile);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"caplab: compression-aware low-light enhancement toolkit", "caplab"};
  app.require_subcommand(1);
  app.fallthrough(false);

  const char* env = std::getenv(kEnvDataDir);
  const std::string env_data = env ? env : "";
  const std::string data_help = std::string("dataset root (default: $") + kEnvDataDir + ")";

  // synth
  Command synth_cmd;
  synth_cmd.keys = {
      {"qf", ValueKind::kInt, "80"},
      {"seed", ValueKind::kUInt, "0"},
      {"gamma", ValueKind::kReal, format_real(DarkenParams{}.gamma)},
      {"gain", ValueKind::kReal, format_real(DarkenParams{}.gain)},
      {"noise_sigma", ValueKind::kReal, format_real(DarkenParams{}.noise_sigma)},
      {"train_fraction", ValueKind::kReal, format_real(SynthOptions{}.train_fraction)},
      {"subsampling", ValueKind::kText, "444"},
  };
  std::string synth_in;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "darken and JPEG-compress bright images into a dataset");
  synth->add_option("--in", synth_in, "directory of bright .png images")->required();
  synth->add_option("--out", synth_out, "dataset directory to create")->required();
  add_setting_flag(synth, synth_cmd, "--qf", "qf", "JPEG quality factor 1..100");
  add_setting_flag(synth, synth_cmd, "--seed", "seed", "split and noise seed");
  add_config_flag(synth, synth_cmd);
  synth_cmd.paths = {{"in", &synth_in}, {"out", &synth_out}};

  // analyze-loss
  Command loss_cmd;
  loss_cmd.keys = {
      {"qf", ValueKind::kInt, "80"},
      {"bins", ValueKind::kInt, "10"},
      {"subsampling", ValueKind::kText, "444"},
      {"loss_map", ValueKind::kBool, "true"},
  };
  std::string loss_in;
  std::string loss_out = ".";
  auto* loss = app.add_subcommand("analyze-loss", "JPEG loss binned by luminance, with loss-map images");
  loss->add_option("--in", loss_in, "a .png image or a directory of them")->required();
  loss->add_option("--out", loss_out, "output directory")->capture_default_str();
  add_setting_flag(loss, loss_cmd, "--qf", "qf", "JPEG quality factor 1..100");
  add_setting_flag(loss, loss_cmd, "--bins", "bins", "number of luminance bins");
  add_config_flag(loss, loss_cmd);
  loss_cmd.paths = {{"in", &loss_in}, {"out", &loss_out}};

  // pretrain / finetune share the training flags
  auto training_keys = [] {
    std::vector<KeySpec> keys = train_keys();
    append(keys, model_keys());
    return keys;
  };
  auto add_training_flags = [&](CLI::App* sub, Command& cmd) {
    add_setting_flag(sub, cmd, "--seed", "seed", "weight init and sampling seed");
    add_setting_flag(sub, cmd, "--epochs", "epochs", "training epochs");
    add_setting_flag(sub, cmd, "--lr", "lr", "peak Adam learning rate");
    add_setting_flag(sub, cmd, "--batch", "batch", "patches per step");
    add_setting_flag(sub, cmd, "--patch", "patch", "square patch side in pixels");
    add_setting_flag(sub, cmd, "--use-bgsa", "use_bgsa", "brightness-guided masking in attention");
    add_config_flag(sub, cmd);
  };

  Command pre_cmd;
  pre_cmd.keys = training_keys();
  std::string pre_in = env_data;
  std::string pre_out = ".";
  auto* pre = app.add_subcommand("pretrain", "compression-aware pre-training (compressed -> uncompressed low-light)");
  pre->add_option("--in", pre_in, data_help);
  pre->add_option("--out", pre_out, "run directory")->capture_default_str();
  add_training_flags(pre, pre_cmd);
  pre_cmd.paths = {{"in", &pre_in}, {"out", &pre_out}};

  Command ft_cmd;
  ft_cmd.keys = training_keys();
  ft_cmd.keys.push_back({"use_pretrain", ValueKind::kText, "auto"});
  std::string ft_in = env_data;
  std::string ft_out = ".";
  std::string ft_ckpt;
  auto* ft = app.add_subcommand("finetune", "enhancement training against bright targets");
  ft->add_option("--in", ft_in, data_help);
  ft->add_option("--out", ft_out, "run directory")->capture_default_str();
  ft->add_option("--checkpoint", ft_ckpt, "pre-trained checkpoint to start from")
      ->default_str("none")
      ->check(CLI::ExistingFile);
  add_training_flags(ft, ft_cmd);
  add_setting_flag(ft, ft_cmd, "--use-pretrain", "use_pretrain",
                   "start from --checkpoint (auto: when one is given)");
  ft_cmd.paths = {{"in", &ft_in}, {"out", &ft_out}, {"checkpoint", &ft_ckpt}};

  // eval
  Command eval_cmd;
  eval_cmd.keys = {{"target", ValueKind::kText, "auto"}, {"split", ValueKind::kText, "val"}};
  append(eval_cmd.keys, model_keys());
  std::string eval_in = env_data;
  std::string eval_out = "eval";
  std::string eval_ckpt;
  auto* ev = app.add_subcommand("eval", "PSNR / SSIM / Charbonnier of a checkpoint on a dataset split");
  ev->add_option("--in", eval_in, data_help);
  ev->add_option("--out", eval_out, "output directory")->capture_default_str();
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint to evaluate")->required()->check(CLI::ExistingFile);
  add_config_flag(ev, eval_cmd);
  eval_cmd.paths = {{"in", &eval_in}, {"out", &eval_out}, {"checkpoint", &eval_ckpt}};

  // infer
  Command inf_cmd;
  inf_cmd.keys = model_keys();
  std::string inf_in;
  std::string inf_out;
  std::string inf_ckpt;
  auto* inf = app.add_subcommand("infer", "enhance an image or a directory of images");
  inf->add_option("--in", inf_in, "input .png or directory")->required();
  inf->add_option("--out", inf_out, "output .png or directory")->required();
  inf->add_option("--checkpoint", inf_ckpt, "trained checkpoint")->required()->check(CLI::ExistingFile);
  add_config_flag(inf, inf_cmd);
  inf_cmd.paths = {{"in", &inf_in}, {"out", &inf_out}, {"checkpoint", &inf_ckpt}};

  // ablate
  Command abl_cmd;
  abl_cmd.keys = training_keys();
  set_fallback(abl_cmd.keys, "epochs", "30");
  abl_cmd.keys.push_back({"pretrain_epochs", ValueKind::kInt, "10"});
  abl_cmd.keys.push_back({"ablate_seeds", ValueKind::kText, "0"});
  abl_cmd.keys.push_back({"toy_scenes", ValueKind::kInt, "40"});
  abl_cmd.keys.push_back({"toy_size", ValueKind::kInt, "96"});
  std::string abl_in = env_data;
  std::string abl_out = ".";
  std::string abl_preset;
  auto* abl = app.add_subcommand("ablate", "pre-training / BGSA ablation grid");
  abl->add_option("--preset", abl_preset, "ablation preset (table2)")->required();
  abl->add_option("--in", abl_in, data_help + "; procedural toy data when unset");
  abl->add_option("--out", abl_out, "output directory")->capture_default_str();
  add_setting_flag(abl, abl_cmd, "--seed", "ablate_seeds", "seed list, comma separated");
  add_setting_flag(abl, abl_cmd, "--epochs", "epochs", "total epochs per arm");
  add_setting_flag(abl, abl_cmd, "--lr", "lr", "peak Adam learning rate");
  add_setting_flag(abl, abl_cmd, "--batch", "batch", "patches per step");
  add_setting_flag(abl, abl_cmd, "--patch", "patch", "square patch side in pixels");
  add_config_flag(abl, abl_cmd);
  abl_cmd.paths = {{"in", &abl_in}, {"out", &abl_out}, {"preset", &abl_preset}};

  // report
  Command rep_cmd;
  std::string rep_in = ".";
  std::string rep_out;
  auto* rep = app.add_subcommand("report", "plots and a text summary of a run directory");
  rep->add_option("--in", rep_in, "run directory")->capture_default_str();
  rep->add_option("--out", rep_out, "output directory")->default_str("<in>/report");
  add_config_flag(rep, rep_cmd);
  rep_cmd.paths = {{"in", &rep_in}, {"out", &rep_out}};

  try {
    std::vector<std::string> reversed(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
    std::reverse(reversed.begin(), reversed.end());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    CLI::App* target = &app;
    for (auto* sub : app.get_subcommands()) target = sub;
    out << target->help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error[usage]: " << msg << '\n';
    return kExitUsage;
  }

  const Io io{out, err};
  try {
    if (synth->parsed()) {
      run_synth(synth_cmd, resolve(synth_cmd), synth_in, synth_out, io);
    } else if (loss->parsed()) {
      run_analyze_loss(loss_cmd, resolve(loss_cmd), loss_in, loss_out, io);
    } else if (pre->parsed()) {
      run_pretrain(pre_cmd, resolve(pre_cmd), pre_in, pre_out, io);
    } else if (ft->parsed()) {
      run_finetune(ft_cmd, ft_in, ft_out, ft_ckpt, io);
    } else if (ev->parsed()) {
      run_eval(eval_cmd, resolve(eval_cmd), eval_in, eval_out, eval_ckpt, io);
    } else if (inf->parsed()) {
      run_infer(inf_cmd, resolve(inf_cmd), inf_in, inf_out, inf_ckpt, io);
    } else if (abl->parsed()) {
      run_ablate(abl_cmd, resolve(abl_cmd), abl_in, abl_out, abl_preset, io);
    } else if (rep->parsed()) {
      run_report(rep_cmd, resolve(rep_cmd), rep_in, rep_out, io);
    }
  } catch (const UsageError& e) {
    err << "error[" << e.category << "]: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error[" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const fs::filesystem_error& e) {
    err << "error[io]: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace caplab::cli
