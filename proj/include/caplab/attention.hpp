#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "caplab/image.hpp"
#include "caplab/nn.hpp"

namespace caplab {

// N x d, one row per token, tokens in row-major spatial order.
using TokenSequence = nn::Mat;

struct BinaryTokenMask {
  std::vector<std::uint8_t> values;  // 0 or 1 per token

  std::size_t size() const { return values.size(); }
  std::size_t count_masked() const;
  bool all_masked() const { return count_masked() == values.size(); }
  static BinaryTokenMask ones(std::size_t n) {
    return {std::vector<std::uint8_t>(n, 1)};
  }
};

inline constexpr double kMaskSigma = -1e9;
inline constexpr double kMaskTau = 1e-3;

// Average-pools b over factor x factor cells, then thresholds at tau.
// b's sides must be multiples of factor.
BinaryTokenMask pool_mask_to_tokens(const GrayImage& b, int factor, double tau);

struct AttentionOutput {
  TokenSequence output;
  std::vector<nn::Mat> weights;  // per head, N x N, rows are queries
};

// Multi-head scaled dot-product attention without a mask.
AttentionOutput scaled_dot_product_attention(const TokenSequence& q,
                                             const TokenSequence& k,
                                             const TokenSequence& v,
                                             int num_heads = 1);

// Brightness-guided attention: logits QK^T / sqrt(d_head) + (1 - mask_j)
// sigma on every key column j, shared across heads. An all-zero mask is
// treated as all ones.
AttentionOutput bgsa(const TokenSequence& q, const TokenSequence& k,
                     const TokenSequence& v, const BinaryTokenMask& mask,
                     double sigma = kMaskSigma, int num_heads = 1);

struct AttentionGrads {
  TokenSequence dq;
  TokenSequence dk;
  TokenSequence dv;
};

// Backward pass of either attention given the saved weights.
AttentionGrads attention_backward(const TokenSequence& q,
                                  const TokenSequence& k,
                                  const TokenSequence& v,
                                  const AttentionOutput& forward,
                                  const TokenSequence& dout, int num_heads);

// Pre-norm transformer block with BGSA:
//   x = x + proj(attn(LN1(x)));  x = x + fc2(act(fc1(LN2(x))))
struct BgVitBlock {
  int dim = 0;
  int hidden = 0;
  int num_heads = 1;
  double sigma = kMaskSigma;
  nn::Activation activation = nn::Activation::kGelu;
  nn::LayerNorm ln1;
  nn::Linear qkv;
  nn::Linear proj;
  nn::LayerNorm ln2;
  nn::Linear fc1;
  nn::Linear fc2;

  static BgVitBlock create(nn::ParameterSet& params, const std::string& name,
                           int dim, int hidden, int num_heads, double sigma,
                           nn::Activation activation);

  struct Cache {
    nn::LayerNorm::Cache ln1;
    nn::Mat normed1;
    TokenSequence q, k, v;
    AttentionOutput attention;
    nn::Mat mid;  // residual stream after the attention branch
    nn::LayerNorm::Cache ln2;
    nn::Mat normed2;
    nn::Mat hidden_pre;
    nn::Mat hidden_post;
  };

  // mask == nullptr runs plain attention.
  TokenSequence forward(const nn::ParameterSet& p, const TokenSequence& x,
                        const BinaryTokenMask* mask, Cache* cache) const;
  TokenSequence backward(const nn::ParameterSet& p, const Cache& cache,
                         const TokenSequence& dout,
                         nn::ParameterSet& grads) const;
};

}  // namespace caplab
