#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "caplab/attention.hpp"
#include "caplab/image.hpp"
#include "caplab/nn.hpp"

namespace caplab {

struct ModelConfig {
  int base_channels = 16;
  int num_downsamples = 3;
  int num_bgvit_blocks = 4;
  int num_heads = 4;
  double mlp_ratio = 2.0;
  double mask_sigma = kMaskSigma;
  double mask_tau = kMaskTau;
  bool use_bgsa = true;
  bool positional_embedding = false;
  nn::Activation activation = nn::Activation::kGelu;
  int input_channels = 3;

  int bottleneck_channels() const { return base_channels << num_downsamples; }
  int mlp_hidden() const;
  int size_factor() const { return 1 << num_downsamples; }

  // Throws kInvalidConfig on any violated invariant.
  void validate() const;

  std::map<std::string, std::string> to_fields() const;
  static ModelConfig from_fields(const std::map<std::string, std::string>& fields);

  bool operator==(const ModelConfig&) const = default;
};

// Exact number of trainable scalars for a configuration.
std::size_t param_count(const ModelConfig& config);

struct TokenMaskInfo {
  BinaryTokenMask mask;
  // Set when the input is all black or every token fell below the
  // threshold; the mask is then all ones.
  bool degenerate = false;
};

// U-shaped conv encoder/decoder with a bottleneck of brightness-guided ViT
// blocks. Encoder stages are stride-2 convs doubling width; decoder stages
// expand with a 3x3 conv, pixel-shuffle by 2, concatenate the encoder skip
// and fuse with a 1x1 conv.
class CapFormer {
 public:
  explicit CapFormer(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const nn::ParameterSet& params() const { return params_; }
  nn::ParameterSet& params() { return params_; }

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases, unit
  // LayerNorm gains.
  void init_weights(std::uint64_t seed);

  // Brightness mask at token resolution for an already padded input.
  TokenMaskInfo token_mask(const Image& padded) const;

  struct Cache {
    int height = 0;
    int width = 0;
    int padded_height = 0;
    int padded_width = 0;
    TokenMaskInfo mask;
    nn::Conv2d::Cache stem;
    nn::Mat stem_pre;
    std::vector<nn::Conv2d::Cache> enc;
    std::vector<nn::Mat> enc_pre;
    std::vector<BgVitBlock::Cache> blocks;
    int token_height = 0;
    int token_width = 0;
    std::vector<nn::Conv2d::Cache> expand;
    std::vector<nn::Conv2d::Cache> fuse;
    std::vector<nn::Mat> fuse_pre;
    std::vector<int> skip_channels;
    nn::Conv2d::Cache head;
  };

  // Unclamped output with the input's spatial size. Pads by edge
  // replication to a multiple of 2^num_downsamples and crops afterwards.
  Image forward(const Image& img, Cache* cache = nullptr) const;

  // Accumulates d loss / d params into grads given d loss / d output.
  void backward(const Cache& cache, const Image& dout,
                nn::ParameterSet& grads) const;

 private:

  ModelConfig config_;
  nn::ParameterSet params_;
  nn::Conv2d stem_;
  std::vector<nn::Conv2d> enc_;
  std::vector<BgVitBlock> blocks_;
  std::vector<nn::Conv2d> expand_;  // indexed by decoder stage, deepest first
  std::vector<nn::Conv2d> fuse_;
  nn::Conv2d head_;
};

// 2-D sinusoidal embedding, half the width for rows and half for columns.
nn::Mat positional_embedding(int token_height, int token_width, int dim);

}  // namespace caplab
