#include "caplab/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "caplab/error.hpp"
#include "caplab/format.hpp"

namespace caplab {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::kPretrain: return "pretrain";
    case Stage::kFinetune: return "finetune";
    case Stage::kScratch: return "scratch";
  }
  return "scratch";
}

Stage parse_stage(const std::string& text) {
  if (text == "pretrain") return Stage::kPretrain;
  if (text == "finetune") return Stage::kFinetune;
  if (text == "scratch") return Stage::kScratch;
  fail(ErrorKind::kInvalidConfig, "unknown stage '" + text + "'");
}

void write_history_csv(std::ostream& out, const TrainHistory& history) {
  out << "epoch,train_loss,val_psnr,val_ssim,val_charbonnier\n";
  for (const auto& e : history.epochs) {
    out << e.epoch << ',' << format_real(e.train_loss) << ',';
    if (e.has_val) {
      out << format_real(e.val_psnr) << ',' << format_real(e.val_ssim) << ','
          << format_real(e.val_charbonnier);
    } else {
      out << ",,";
    }
    out << '\n';
  }
}

CapFormer Checkpoint::make_model() const {
  CapFormer model(this->model);
  auto& target = model.params();
  if (target.size() != params.size()) {
    fail(ErrorKind::kInvalidConfig, "checkpoint tensors do not match its model config");
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target.entry(i).name != params.entry(i).name ||
        target.entry(i).value.size() != params.entry(i).value.size()) {
      fail(ErrorKind::kInvalidConfig,
           "checkpoint tensor " + params.entry(i).name + " does not match the model");
    }
    target.entry(i).value = params.entry(i).value;
  }
  return model;
}

namespace {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void pod(T v) { out_.write(reinterpret_cast<const char*>(&v), sizeof(T)); }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void tensor(const nn::ParameterSet::Entry& e) {
    str(e.name);
    pod(static_cast<std::uint32_t>(e.shape.size()));
    for (int d : e.shape) pod(static_cast<std::int32_t>(d));
    out_.write(reinterpret_cast<const char*>(e.value.data()),
               static_cast<std::streamsize>(e.value.size() * sizeof(double)));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}
  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    if (n > (1u << 30)) corrupt();
    std::string s(n, '\0');
    in_.read(s.data(), n);
    check();
    return s;
  }
  nn::ParameterSet::Entry tensor() {
    nn::ParameterSet::Entry e;
    e.name = str();
    const auto rank = pod<std::uint32_t>();
    if (rank > 8) corrupt();
    Eigen::Index n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto d = pod<std::int32_t>();
      if (d <= 0) corrupt();
      e.shape.push_back(d);
      n *= d;
    }
    e.value.resize(n);
    in_.read(reinterpret_cast<char*>(e.value.data()),
             static_cast<std::streamsize>(n * sizeof(double)));
    check();
    return e;
  }
  [[noreturn]] void corrupt() {
    fail(ErrorKind::kIo, source_ + ": corrupt or truncated checkpoint");
  }

 private:
  void check() {
    if (!in_) corrupt();
  }
  std::istream& in_;
  std::string source_;
};

nn::ParameterSet rebuild(const std::vector<nn::ParameterSet::Entry>& entries,
                         const nn::ParameterSet& layout, Reader& reader) {
  if (entries.size() != layout.size()) reader.corrupt();
  nn::ParameterSet out = layout.zeros_like();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].name != layout.entry(i).name ||
        entries[i].value.size() != layout.entry(i).value.size()) {
      reader.corrupt();
    }
    out.entry(i).value = entries[i].value;
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write checkpoint " + path.string());
  Writer w(out);
  out.write("CAPLABCK", 8);
  w.pod(kCheckpointVersion);

  std::map<std::string, std::string> meta;
  meta["stage"] = to_string(ckpt.stage);
  meta["seed"] = std::to_string(ckpt.seed);
  meta["param_count"] = std::to_string(ckpt.param_count);
  meta["eps_charbonnier"] = format_real(ckpt.history.eps_charbonnier);
  for (const auto& [k, v] : ckpt.model.to_fields()) meta["model." + k] = v;
  for (const auto& [k, v] : ckpt.effective_config) meta["config." + k] = v;
  w.pod(static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    w.str(k);
    w.str(v);
  }

  std::ostringstream history;
  write_history_csv(history, ckpt.history);
  w.str(history.str());

  w.pod(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& e : ckpt.params.entries()) w.tensor(e);

  const bool has_moments = ckpt.optimizer.first_moment.size() == ckpt.params.size();
  w.pod(ckpt.optimizer.step);
  w.pod(static_cast<std::uint32_t>(has_moments ? ckpt.params.size() : 0));
  if (has_moments) {
    for (const auto& e : ckpt.optimizer.first_moment.entries()) w.tensor(e);
    for (const auto& e : ckpt.optimizer.second_moment.entries()) w.tensor(e);
  }
  if (!out) fail(ErrorKind::kIo, "failed writing checkpoint " + path.string());
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

TrainHistory parse_history(const std::string& csv, double eps, Reader& reader) {
  TrainHistory h;
  h.eps_charbonnier = eps;
  std::stringstream ss(csv);
  std::string line;
  std::getline(ss, line);  // header
  while (std::getline(ss, line)) {
    const auto f = split(line, ',');
    if (f.size() != 5) reader.corrupt();
    EpochRecord r;
    try {
      r.epoch = std::stoi(f[0]);
      r.train_loss = std::stod(f[1]);
      r.has_val = !f[2].empty();
      if (r.has_val) {
        r.val_psnr = std::stod(f[2]);
        r.val_ssim = std::stod(f[3]);
        r.val_charbonnier = std::stod(f[4]);
      }
    } catch (const std::logic_error&) {
      reader.corrupt();
    }
    h.epochs.push_back(r);
  }
  return h;
}

}  // namespace

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot read checkpoint " + path.string());
  Reader r(in, path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "CAPLABCK") {
    fail(ErrorKind::kIo, path.string() + " is not a checkpoint file");
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    fail(ErrorKind::kIo, path.string() + ": unsupported checkpoint version " +
                             std::to_string(version));
  }
  Checkpoint ckpt;
  std::map<std::string, std::string> model_fields;
  const auto n_meta = r.pod<std::uint32_t>();
  std::map<std::string, std::string> meta;
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    meta[k] = r.str();
  }
  double eps = 0.0;
  try {
    ckpt.stage = parse_stage(meta.at("stage"));
    ckpt.seed = std::stoull(meta.at("seed"));
    ckpt.param_count = std::stoull(meta.at("param_count"));
    eps = std::stod(meta.at("eps_charbonnier"));
  } catch (const std::exception&) {
    r.corrupt();
  }
  for (const auto& [k, v] : meta) {
    if (k.starts_with("model.")) model_fields[k.substr(6)] = v;
    if (k.starts_with("config.")) ckpt.effective_config[k.substr(7)] = v;
  }
  ckpt.model = ModelConfig::from_fields(model_fields);
  ckpt.history = parse_history(r.str(), eps, r);

  const CapFormer layout(ckpt.model);
  std::vector<nn::ParameterSet::Entry> entries(r.pod<std::uint32_t>());
  for (auto& e : entries) e = r.tensor();
  ckpt.params = rebuild(entries, layout.params(), r);

  ckpt.optimizer.step = r.pod<std::uint64_t>();
  const auto n_moments = r.pod<std::uint32_t>();
  if (n_moments > 0) {
    std::vector<nn::ParameterSet::Entry> m(n_moments), v(n_moments);
    for (auto& e : m) e = r.tensor();
    for (auto& e : v) e = r.tensor();
    ckpt.optimizer.first_moment = rebuild(m, layout.params(), r);
    ckpt.optimizer.second_moment = rebuild(v, layout.params(), r);
  }
  return ckpt;
}

}  // namespace caplab
