#include "caplab/capformer.hpp"

#include <cmath>
#include <random>

#include "caplab/error.hpp"
#include "caplab/format.hpp"

namespace caplab {

using nn::FeatureMap;
using nn::Mat;

int ModelConfig::mlp_hidden() const {
  return static_cast<int>(std::lround(mlp_ratio * bottleneck_channels()));
}

void ModelConfig::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorKind::kInvalidConfig, msg); };
  if (base_channels <= 0) bad("base_channels must be positive");
  if (num_downsamples < 1 || num_downsamples > 6) {
    bad("num_downsamples must lie in [1,6]");
  }
  if (num_bgvit_blocks < 0) bad("num_bgvit_blocks must be >= 0");
  if (num_heads <= 0) bad("num_heads must be positive");
  if (bottleneck_channels() % num_heads != 0) {
    bad("bottleneck channels " + std::to_string(bottleneck_channels()) +
        " not divisible by num_heads " + std::to_string(num_heads));
  }
  if (!(mlp_ratio > 0.0) || mlp_hidden() < 1) bad("mlp_ratio must be positive");
  if (!(mask_sigma < 0.0)) bad("mask_sigma must be negative");
  if (!(mask_tau >= 0.0 && mask_tau <= 1.0)) bad("mask_tau must lie in [0,1]");
  if (input_channels != 3) bad("input_channels must be 3");
  if (positional_embedding && bottleneck_channels() % 4 != 0) {
    bad("positional embedding needs bottleneck channels divisible by 4");
  }
}

std::map<std::string, std::string> ModelConfig::to_fields() const {
  return {
      {"base_channels", std::to_string(base_channels)},
      {"num_downsamples", std::to_string(num_downsamples)},
      {"num_bgvit_blocks", std::to_string(num_bgvit_blocks)},
      {"num_heads", std::to_string(num_heads)},
      {"mlp_ratio", format_real(mlp_ratio)},
      {"mask_sigma", format_real(mask_sigma)},
      {"mask_tau", format_real(mask_tau)},
      {"use_bgsa", use_bgsa ? "true" : "false"},
      {"positional_embedding", positional_embedding ? "true" : "false"},
      {"activation", activation == nn::Activation::kGelu ? "gelu" : "identity"},
      {"input_channels", std::to_string(input_channels)},
  };
}

ModelConfig ModelConfig::from_fields(const std::map<std::string, std::string>& f) {
  ModelConfig c;
  auto get = [&](const char* key) -> const std::string& {
    auto it = f.find(key);
    if (it == f.end()) fail(ErrorKind::kInvalidConfig, std::string("missing model field ") + key);
    return it->second;
  };
  try {
    c.base_channels = std::stoi(get("base_channels"));
    c.num_downsamples = std::stoi(get("num_downsamples"));
    c.num_bgvit_blocks = std::stoi(get("num_bgvit_blocks"));
    c.num_heads = std::stoi(get("num_heads"));
    c.mlp_ratio = std::stod(get("mlp_ratio"));
    c.mask_sigma = std::stod(get("mask_sigma"));
    c.mask_tau = std::stod(get("mask_tau"));
    c.input_channels = std::stoi(get("input_channels"));
  } catch (const std::logic_error&) {
    fail(ErrorKind::kInvalidConfig, "malformed numeric model field");
  }
  c.use_bgsa = get("use_bgsa") == "true";
  c.positional_embedding = get("positional_embedding") == "true";
  const std::string& act = get("activation");
  if (act != "gelu" && act != "identity") {
    fail(ErrorKind::kInvalidConfig, "unknown activation '" + act + "'");
  }
  c.activation = act == "gelu" ? nn::Activation::kGelu : nn::Activation::kIdentity;
  return c;
}

std::size_t param_count(const ModelConfig& config) {
  return CapFormer(config).params().scalar_count();
}

Mat positional_embedding(int token_height, int token_width, int dim) {
  const int half = dim / 2;
  Mat pe(static_cast<Eigen::Index>(token_height) * token_width, dim);
  for (int ty = 0; ty < token_height; ++ty) {
    for (int tx = 0; tx < token_width; ++tx) {
      const Eigen::Index row = static_cast<Eigen::Index>(ty) * token_width + tx;
      for (int axis = 0; axis < 2; ++axis) {
        const double pos = axis == 0 ? ty : tx;
        for (int i = 0; i < half / 2; ++i) {
          const double freq = std::pow(10000.0, -2.0 * i / half);
          pe(row, axis * half + 2 * i) = std::sin(pos * freq);
          pe(row, axis * half + 2 * i + 1) = std::cos(pos * freq);
        }
      }
    }
  }
  return pe;
}

CapFormer::CapFormer(const ModelConfig& config) : config_(config) {
  config_.validate();
  const int base = config_.base_channels;
  const int n = config_.num_downsamples;
  stem_ = nn::Conv2d::create(params_, "stem", config_.input_channels, base, 3, 1);
  for (int l = 1; l <= n; ++l) {
    enc_.push_back(nn::Conv2d::create(params_, "encoder." + std::to_string(l),
                                      base << (l - 1), base << l, 3, 2));
  }
  const int dim = config_.bottleneck_channels();
  for (int b = 0; b < config_.num_bgvit_blocks; ++b) {
    blocks_.push_back(BgVitBlock::create(params_, "bottleneck." + std::to_string(b),
                                         dim, config_.mlp_hidden(),
                                         config_.num_heads, config_.mask_sigma,
                                         config_.activation));
  }
  for (int l = n; l >= 1; --l) {
    const int c = base << l;
    const std::string name = "decoder." + std::to_string(l);
    expand_.push_back(nn::Conv2d::create(params_, name + ".expand", c, 2 * c, 3, 1));
    fuse_.push_back(nn::Conv2d::create(params_, name + ".fuse", c, c / 2, 1, 1));
  }
  head_ = nn::Conv2d::create(params_, "head", base, 3, 3, 1);
}

void CapFormer::init_weights(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& e = params_.entry(i);
    const std::string& name = e.name;
    if (name.ends_with(".gamma")) {
      e.value.setOnes();
      continue;
    }
    if (name.ends_with(".beta")) {
      e.value.setZero();
      continue;
    }
    // Bias entries follow their weight; fan-in comes from that weight.
    const auto& shape = e.shape;
    int fan_in = 1;
    if (name.ends_with(".weight")) {
      for (std::size_t d = 1; d < shape.size(); ++d) fan_in *= shape[d];
    } else {
      const auto& w = params_.entry(i - 1).shape;
      for (std::size_t d = 1; d < w.size(); ++d) fan_in *= w[d];
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index k = 0; k < e.value.size(); ++k) e.value[k] = u(rng);
  }
}

TokenMaskInfo CapFormer::token_mask(const Image& padded) const {
  TokenMaskInfo info;
  const GrayImage gray = to_grayscale(padded);
  double peak = 0.0;
  for (double v : gray.data()) peak = std::max(peak, v);
  const GrayImage bmap = brightness_map(padded);
  info.mask = pool_mask_to_tokens(bmap, config_.size_factor(), config_.mask_tau);
  info.degenerate = !(peak > 0.0);
  if (info.mask.all_masked()) {
    info.mask = BinaryTokenMask::ones(info.mask.size());
    info.degenerate = true;
  }
  return info;
}

namespace {

FeatureMap to_feature_map(const Image& img) {
  FeatureMap f;
  f.height = img.height();
  f.width = img.width();
  f.data = nn::ConstMatMap(img.data().data(), img.channels(),
                           static_cast<Eigen::Index>(img.height()) * img.width());
  return f;
}

FeatureMap activated(const Mat& pre, int h, int w, nn::Activation act) {
  return FeatureMap{h, w, nn::activate(pre, act)};
}

}  // namespace

Image CapFormer::forward(const Image& img, Cache* cache) const {
  if (img.channels() != 3) {
    fail(ErrorKind::kInvalidInput, "model expects a 3-channel image, got " +
                                       std::to_string(img.channels()));
  }
  const int factor = config_.size_factor();
  if (img.height() < factor || img.width() < factor) {
    fail(ErrorKind::kInvalidInput,
         "input " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
             " is smaller than the downsampling factor " + std::to_string(factor));
  }
  if (!params_.all_finite()) {
    fail(ErrorKind::kNumeric, "model weights contain NaN or Inf");
  }
  Cache local;
  Cache& c = cache ? *cache : local;
  const nn::Activation act = config_.activation;
  c.height = img.height();
  c.width = img.width();
  const Image padded = pad_edge(img, (factor - img.height() % factor) % factor,
                                (factor - img.width() % factor) % factor);
  c.padded_height = padded.height();
  c.padded_width = padded.width();
  c.mask = config_.use_bgsa ? token_mask(padded) : TokenMaskInfo{};

  FeatureMap x = to_feature_map(padded);
  FeatureMap pre = stem_.forward(params_, x, &c.stem);
  c.stem_pre = pre.data;
  std::vector<FeatureMap> skips;
  skips.push_back(activated(pre.data, pre.height, pre.width, act));

  const int n = config_.num_downsamples;
  c.enc.assign(n, {});
  c.enc_pre.assign(n, {});
  for (int l = 0; l < n; ++l) {
    pre = enc_[l].forward(params_, skips.back(), &c.enc[l]);
    c.enc_pre[l] = pre.data;
    skips.push_back(activated(pre.data, pre.height, pre.width, act));
  }

  FeatureMap bottom = skips.back();
  c.token_height = bottom.height;
  c.token_width = bottom.width;
  TokenSequence tokens = bottom.data.transpose();
  if (config_.positional_embedding) {
    tokens += positional_embedding(bottom.height, bottom.width, tokens.cols());
  }
  c.blocks.assign(blocks_.size(), {});
  const BinaryTokenMask* mask = config_.use_bgsa ? &c.mask.mask : nullptr;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    tokens = blocks_[b].forward(params_, tokens, mask, &c.blocks[b]);
  }
  FeatureMap y{bottom.height, bottom.width, tokens.transpose()};

  c.expand.assign(n, {});
  c.fuse.assign(n, {});
  c.fuse_pre.assign(n, {});
  c.skip_channels.assign(n, 0);
  for (int s = 0; s < n; ++s) {
    const FeatureMap& skip = skips[n - 1 - s];
    const FeatureMap up = nn::pixel_shuffle(expand_[s].forward(params_, y, &c.expand[s]));
    c.skip_channels[s] = skip.channels();
    const FeatureMap fused = fuse_[s].forward(params_, nn::concat_channels(up, skip), &c.fuse[s]);
    c.fuse_pre[s] = fused.data;
    y = activated(fused.data, fused.height, fused.width, act);
  }
  const FeatureMap out = head_.forward(params_, y, &c.head);

  Image result(img.height(), img.width(), 3);
  for (int yy = 0; yy < img.height(); ++yy) {
    for (int xx = 0; xx < img.width(); ++xx) {
      const auto col = out.data.col(static_cast<Eigen::Index>(yy) * out.width + xx);
      for (int ch = 0; ch < 3; ++ch) result.at(yy, xx, ch) = col(ch);
    }
  }
  return result;
}

void CapFormer::backward(const Cache& c, const Image& dout,
                         nn::ParameterSet& grads) const {
  if (dout.height() != c.height || dout.width() != c.width || dout.channels() != 3) {
    fail(ErrorKind::kInternal, "output gradient does not match forward pass");
  }
  const nn::Activation act = config_.activation;
  const int n = config_.num_downsamples;

  FeatureMap dy{c.padded_height, c.padded_width,
                Mat::Zero(3, static_cast<Eigen::Index>(c.padded_height) * c.padded_width)};
  for (int yy = 0; yy < c.height; ++yy) {
    for (int xx = 0; xx < c.width; ++xx) {
      auto col = dy.data.col(static_cast<Eigen::Index>(yy) * c.padded_width + xx);
      for (int ch = 0; ch < 3; ++ch) col(ch) = dout.at(yy, xx, ch);
    }
  }

  FeatureMap d = head_.backward(params_, c.head, dy, grads);
  // dskip[l]: gradient w.r.t. the activated encoder output at level l.
  std::vector<Mat> dskip(n + 1);
  for (int s = n - 1; s >= 0; --s) {
    const FeatureMap dpre{d.height, d.width, nn::activate_backward(c.fuse_pre[s], d.data, act)};
    const FeatureMap dcat = fuse_[s].backward(params_, c.fuse[s], dpre, grads);
    const int skip_c = c.skip_channels[s];
    const int up_c = dcat.channels() - skip_c;
    dskip[n - 1 - s] = dcat.data.bottomRows(skip_c);
    const FeatureMap dup{dcat.height, dcat.width, dcat.data.topRows(up_c)};
    d = expand_[s].backward(params_, c.expand[s], nn::pixel_unshuffle(dup), grads);
  }

  TokenSequence dtokens = d.data.transpose();
  for (std::size_t b = blocks_.size(); b-- > 0;) {
    dtokens = blocks_[b].backward(params_, c.blocks[b], dtokens, grads);
  }
  Mat dlevel = dtokens.transpose();  // bottom level has no decoder skip

  for (int l = n - 1; l >= 0; --l) {
    const Mat& pre = c.enc_pre[l];
    const FeatureMap dpre{d.height, d.width, nn::activate_backward(pre, dlevel, act)};
    FeatureMap dprev = enc_[l].backward(params_, c.enc[l], dpre, grads);
    dlevel = dprev.data + dskip[l];
    d.height = dprev.height;
    d.width = dprev.width;
  }
  const FeatureMap dpre{c.padded_height, c.padded_width,
                        nn::activate_backward(c.stem_pre, dlevel, act)};
  stem_.backward(params_, c.stem, dpre, grads, /*need_input=*/false);
}

}  // namespace caplab
