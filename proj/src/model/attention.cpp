#include "caplab/attention.hpp"

#include <algorithm>
#include <cmath>

#include "caplab/error.hpp"

namespace caplab {

using nn::Mat;

std::size_t BinaryTokenMask::count_masked() const {
  return static_cast<std::size_t>(
      std::count(values.begin(), values.end(), std::uint8_t{0}));
}

BinaryTokenMask pool_mask_to_tokens(const GrayImage& b, int factor, double tau) {
  if (factor <= 0 || b.height() % factor != 0 || b.width() % factor != 0) {
    fail(ErrorKind::kInternal,
         "brightness map " + std::to_string(b.height()) + "x" +
             std::to_string(b.width()) + " is not divisible by pooling factor " +
             std::to_string(factor));
  }
  if (!(tau >= 0.0 && tau <= 1.0)) {
    fail(ErrorKind::kInvalidConfig, "mask threshold must lie in [0,1]");
  }
  const int th = b.height() / factor;
  const int tw = b.width() / factor;
  BinaryTokenMask mask;
  mask.values.resize(static_cast<std::size_t>(th) * tw);
  const double cell = static_cast<double>(factor) * factor;
  for (int ty = 0; ty < th; ++ty) {
    for (int tx = 0; tx < tw; ++tx) {
      double sum = 0.0;
      for (int y = 0; y < factor; ++y) {
        for (int x = 0; x < factor; ++x) sum += b.at(ty * factor + y, tx * factor + x);
      }
      mask.values[static_cast<std::size_t>(ty) * tw + tx] = (sum / cell < tau) ? 0 : 1;
    }
  }
  return mask;
}

namespace {

void check_operands(const TokenSequence& q, const TokenSequence& k,
                    const TokenSequence& v, int num_heads) {
  if (q.rows() != k.rows() || q.rows() != v.rows() || q.cols() != k.cols() ||
      q.cols() != v.cols()) {
    fail(ErrorKind::kInvalidInput, "attention operands disagree in shape");
  }
  if (num_heads <= 0 || q.cols() % num_heads != 0) {
    fail(ErrorKind::kInvalidInput, "token width " + std::to_string(q.cols()) +
                                       " not divisible by " +
                                       std::to_string(num_heads) + " heads");
  }
}

// mask == nullptr skips the additive term entirely.
AttentionOutput attend(const TokenSequence& q, const TokenSequence& k,
                       const TokenSequence& v, const std::uint8_t* mask,
                       double sigma, int num_heads) {
  const Eigen::Index n = q.rows();
  const Eigen::Index dh = q.cols() / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  AttentionOutput out;
  out.output.resize(n, q.cols());
  out.weights.resize(num_heads);
  for (int h = 0; h < num_heads; ++h) {
    const auto qh = q.middleCols(h * dh, dh);
    const auto kh = k.middleCols(h * dh, dh);
    const auto vh = v.middleCols(h * dh, dh);
    Mat logits = (qh * kh.transpose()) * scale;
    if (mask) {
      for (Eigen::Index j = 0; j < n; ++j) {
        logits.col(j).array() += (1.0 - mask[j]) * sigma;
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      auto row = logits.row(i);
      const double peak = row.maxCoeff();
      row = (row.array() - peak).exp();
      row /= row.sum();
    }
    out.output.middleCols(h * dh, dh).noalias() = logits * vh;
    out.weights[h] = std::move(logits);
  }
  return out;
}

}  // namespace

AttentionOutput scaled_dot_product_attention(const TokenSequence& q,
                                             const TokenSequence& k,
                                             const TokenSequence& v,
                                             int num_heads) {
  check_operands(q, k, v, num_heads);
  return attend(q, k, v, nullptr, 0.0, num_heads);
}

AttentionOutput bgsa(const TokenSequence& q, const TokenSequence& k,
                     const TokenSequence& v, const BinaryTokenMask& mask,
                     double sigma, int num_heads) {
  check_operands(q, k, v, num_heads);
  if (mask.size() != static_cast<std::size_t>(k.rows())) {
    fail(ErrorKind::kInvalidInput,
         "token mask has " + std::to_string(mask.size()) + " entries for " +
             std::to_string(k.rows()) + " tokens");
  }
  if (mask.all_masked()) {
    const BinaryTokenMask ones = BinaryTokenMask::ones(mask.size());
    return attend(q, k, v, ones.values.data(), sigma, num_heads);
  }
  return attend(q, k, v, mask.values.data(), sigma, num_heads);
}

AttentionGrads attention_backward(const TokenSequence& q,
                                  const TokenSequence& k,
                                  const TokenSequence& v,
                                  const AttentionOutput& forward,
                                  const TokenSequence& dout, int num_heads) {
  const Eigen::Index dh = q.cols() / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  AttentionGrads g{Mat(q.rows(), q.cols()), Mat(k.rows(), k.cols()),
                   Mat(v.rows(), v.cols())};
  for (int h = 0; h < num_heads; ++h) {
    const Mat& a = forward.weights[h];
    const auto dout_h = dout.middleCols(h * dh, dh);
    g.dv.middleCols(h * dh, dh).noalias() = a.transpose() * dout_h;
    const Mat da = dout_h * v.middleCols(h * dh, dh).transpose();
    const Eigen::VectorXd row_dot = da.cwiseProduct(a).rowwise().sum();
    const Mat ds = (a.array() * (da.colwise() - row_dot).array()).matrix() * scale;
    g.dq.middleCols(h * dh, dh).noalias() = ds * k.middleCols(h * dh, dh);
    g.dk.middleCols(h * dh, dh).noalias() = ds.transpose() * q.middleCols(h * dh, dh);
  }
  return g;
}

BgVitBlock BgVitBlock::create(nn::ParameterSet& params, const std::string& name,
                              int dim, int hidden, int num_heads, double sigma,
                              nn::Activation activation) {
  if (dim % num_heads != 0) {
    fail(ErrorKind::kModelConstruction,
         "bottleneck width " + std::to_string(dim) + " not divisible by " +
             std::to_string(num_heads) + " heads");
  }
  BgVitBlock b;
  b.dim = dim;
  b.hidden = hidden;
  b.num_heads = num_heads;
  b.sigma = sigma;
  b.activation = activation;
  b.ln1 = nn::LayerNorm::create(params, name + ".ln1", dim);
  b.qkv = nn::Linear::create(params, name + ".qkv", dim, 3 * dim);
  b.proj = nn::Linear::create(params, name + ".proj", dim, dim);
  b.ln2 = nn::LayerNorm::create(params, name + ".ln2", dim);
  b.fc1 = nn::Linear::create(params, name + ".fc1", dim, hidden);
  b.fc2 = nn::Linear::create(params, name + ".fc2", hidden, dim);
  return b;
}

TokenSequence BgVitBlock::forward(const nn::ParameterSet& p,
                                  const TokenSequence& x,
                                  const BinaryTokenMask* mask,
                                  Cache* cache) const {
  if (x.cols() != dim) {
    fail(ErrorKind::kModelConstruction, "token width does not match block");
  }
  Cache local;
  Cache& c = cache ? *cache : local;
  c.normed1 = ln1.forward(p, x, &c.ln1);
  const Mat packed = qkv.forward(p, c.normed1);
  c.q = packed.leftCols(dim);
  c.k = packed.middleCols(dim, dim);
  c.v = packed.rightCols(dim);
  c.attention = mask ? bgsa(c.q, c.k, c.v, *mask, sigma, num_heads)
                     : scaled_dot_product_attention(c.q, c.k, c.v, num_heads);
  c.mid = x + proj.forward(p, c.attention.output);
  c.normed2 = ln2.forward(p, c.mid, &c.ln2);
  c.hidden_pre = fc1.forward(p, c.normed2);
  c.hidden_post = nn::activate(c.hidden_pre, activation);
  return c.mid + fc2.forward(p, c.hidden_post);
}

TokenSequence BgVitBlock::backward(const nn::ParameterSet& p, const Cache& c,
                                   const TokenSequence& dout,
                                   nn::ParameterSet& grads) const {
  const Mat dhidden_post = fc2.backward(p, c.hidden_post, dout, grads);
  const Mat dhidden_pre = nn::activate_backward(c.hidden_pre, dhidden_post, activation);
  const Mat dnormed2 = fc1.backward(p, c.normed2, dhidden_pre, grads);
  Mat dmid = dout + ln2.backward(p, c.ln2, dnormed2, grads);

  const Mat dattn = proj.backward(p, c.attention.output, dmid, grads);
  const AttentionGrads ag =
      attention_backward(c.q, c.k, c.v, c.attention, dattn, num_heads);
  Mat dpacked(dattn.rows(), 3 * dim);
  dpacked.leftCols(dim) = ag.dq;
  dpacked.middleCols(dim, dim) = ag.dk;
  dpacked.rightCols(dim) = ag.dv;
  const Mat dnormed1 = qkv.backward(p, c.normed1, dpacked, grads);
  return dmid + ln1.backward(p, c.ln1, dnormed1, grads);
}

}  // namespace caplab
