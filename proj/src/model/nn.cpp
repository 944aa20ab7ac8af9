#include "caplab/nn.hpp"

#include <cmath>
#include <numbers>

#include "caplab/error.hpp"

namespace caplab::nn {

std::size_t ParameterSet::add(std::string name, std::vector<int> shape) {
  Eigen::Index n = 1;
  for (int d : shape) n *= d;
  entries_.push_back({std::move(name), std::move(shape), Vec::Zero(n)});
  return entries_.size() - 1;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out = *this;
  out.set_zero();
  return out;
}

void ParameterSet::set_zero() {
  for (auto& e : entries_) e.value.setZero();
}

void ParameterSet::add_scaled(const ParameterSet& other, double scale) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    entries_[i].value += scale * other.entries_[i].value;
  }
}

bool ParameterSet::all_finite() const {
  for (const auto& e : entries_) {
    if (!e.value.allFinite()) return false;
  }
  return true;
}

double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
}

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Mat activate(const Mat& x, Activation act) {
  if (act == Activation::kIdentity) return x;
  return x.unaryExpr([](double v) { return gelu(v); });
}

Mat activate_backward(const Mat& pre, const Mat& dout, Activation act) {
  if (act == Activation::kIdentity) return dout;
  return dout.cwiseProduct(pre.unaryExpr([](double v) { return gelu_grad(v); }));
}

Conv2d Conv2d::create(ParameterSet& params, const std::string& name, int in,
                      int out, int kernel, int stride) {
  Conv2d conv;
  conv.in_channels = in;
  conv.out_channels = out;
  conv.kernel = kernel;
  conv.stride = stride;
  conv.padding = kernel / 2;
  conv.weight = params.add(name + ".weight", {out, kernel, kernel, in});
  conv.bias = params.add(name + ".bias", {out});
  return conv;
}

FeatureMap Conv2d::forward(const ParameterSet& p, const FeatureMap& x,
                           Cache* cache) const {
  if (x.channels() != in_channels) {
    fail(ErrorKind::kModelConstruction,
         "conv expects " + std::to_string(in_channels) + " channels, got " +
             std::to_string(x.channels()));
  }
  const int oh = out_size(x.height);
  const int ow = out_size(x.width);
  const int k = kernel;
  const int cin = in_channels;
  Mat columns = Mat::Zero(static_cast<Eigen::Index>(k) * k * cin,
                          static_cast<Eigen::Index>(oh) * ow);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      double* col = columns.col(static_cast<Eigen::Index>(oy) * ow + ox).data();
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * stride - padding + ky;
        if (iy < 0 || iy >= x.height) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * stride - padding + kx;
          if (ix < 0 || ix >= x.width) continue;
          const double* src = x.data.col(static_cast<Eigen::Index>(iy) * x.width + ix).data();
          double* dst = col + (ky * k + kx) * cin;
          for (int c = 0; c < cin; ++c) dst[c] = src[c];
        }
      }
    }
  }
  FeatureMap out;
  out.height = oh;
  out.width = ow;
  const auto w = p.matrix(weight, out_channels, k * k * cin);
  const auto b = p.matrix(bias, out_channels, 1);
  out.data.noalias() = w * columns;
  out.data.colwise() += b.col(0);
  if (cache) {
    cache->in_height = x.height;
    cache->in_width = x.width;
    cache->columns = std::move(columns);
  }
  return out;
}

FeatureMap Conv2d::backward(const ParameterSet& p, const Cache& cache,
                            const FeatureMap& dout, ParameterSet& grads,
                            bool need_input) const {
  const int k = kernel;
  const int cin = in_channels;
  MatMap dw(grads.entry(weight).value.data(), out_channels, k * k * cin);
  dw.noalias() += dout.data * cache.columns.transpose();
  grads.entry(bias).value += dout.data.rowwise().sum();

  FeatureMap dx;
  dx.height = cache.in_height;
  dx.width = cache.in_width;
  if (!need_input) return dx;

  const auto w = p.matrix(weight, out_channels, k * k * cin);
  const Mat dcols = w.transpose() * dout.data;
  dx.data = Mat::Zero(cin, static_cast<Eigen::Index>(dx.height) * dx.width);
  const int oh = dout.height;
  const int ow = dout.width;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const double* col = dcols.col(static_cast<Eigen::Index>(oy) * ow + ox).data();
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * stride - padding + ky;
        if (iy < 0 || iy >= dx.height) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * stride - padding + kx;
          if (ix < 0 || ix >= dx.width) continue;
          double* dst = dx.data.col(static_cast<Eigen::Index>(iy) * dx.width + ix).data();
          const double* src = col + (ky * k + kx) * cin;
          for (int c = 0; c < cin; ++c) dst[c] += src[c];
        }
      }
    }
  }
  return dx;
}

Linear Linear::create(ParameterSet& params, const std::string& name, int in,
                      int out) {
  Linear lin;
  lin.in_features = in;
  lin.out_features = out;
  lin.weight = params.add(name + ".weight", {out, in});
  lin.bias = params.add(name + ".bias", {out});
  return lin;
}

Mat Linear::forward(const ParameterSet& p, const Mat& x) const {
  const auto w = p.matrix(weight, out_features, in_features);
  const auto b = p.matrix(bias, out_features, 1);
  Mat y = x * w.transpose();
  y.rowwise() += b.col(0).transpose();
  return y;
}

Mat Linear::backward(const ParameterSet& p, const Mat& x, const Mat& dout,
                     ParameterSet& grads) const {
  MatMap dw(grads.entry(weight).value.data(), out_features, in_features);
  dw.noalias() += dout.transpose() * x;
  grads.entry(bias).value += dout.colwise().sum().transpose();
  const auto w = p.matrix(weight, out_features, in_features);
  return dout * w;
}

LayerNorm LayerNorm::create(ParameterSet& params, const std::string& name,
                            int features) {
  LayerNorm ln;
  ln.features = features;
  ln.gamma = params.add(name + ".gamma", {features});
  ln.beta = params.add(name + ".beta", {features});
  params.entry(ln.gamma).value.setOnes();
  return ln;
}

Mat LayerNorm::forward(const ParameterSet& p, const Mat& x, Cache* cache) const {
  const auto g = p.matrix(gamma, 1, features);
  const auto b = p.matrix(beta, 1, features);
  const Vec mean = x.rowwise().mean();
  Mat centered = x.colwise() - mean;
  const Vec var = centered.cwiseAbs2().rowwise().mean();
  const Vec inv_std = (var.array() + eps).rsqrt();
  Mat normalized = centered.array().colwise() * inv_std.array();
  Mat y = normalized.array().rowwise() * g.row(0).array();
  y.rowwise() += b.row(0);
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = inv_std;
  }
  return y;
}

Mat LayerNorm::backward(const ParameterSet& p, const Cache& cache,
                        const Mat& dout, ParameterSet& grads) const {
  const auto g = p.matrix(gamma, 1, features);
  grads.entry(gamma).value +=
      dout.cwiseProduct(cache.normalized).colwise().sum().transpose();
  grads.entry(beta).value += dout.colwise().sum().transpose();
  const Mat dxhat = dout.array().rowwise() * g.row(0).array();
  const Vec mean_d = dxhat.rowwise().mean();
  const Vec mean_dx = dxhat.cwiseProduct(cache.normalized).rowwise().mean();
  Mat dx = dxhat.colwise() - mean_d;
  dx -= (cache.normalized.array().colwise() * mean_dx.array()).matrix();
  return dx.array().colwise() * cache.inv_std.array();
}

FeatureMap pixel_shuffle(const FeatureMap& x) {
  if (x.channels() % 4 != 0) {
    fail(ErrorKind::kModelConstruction, "pixel shuffle needs 4k channels");
  }
  const int c = x.channels() / 4;
  FeatureMap out;
  out.height = x.height * 2;
  out.width = x.width * 2;
  out.data.resize(c, static_cast<Eigen::Index>(out.height) * out.width);
  for (int y = 0; y < x.height; ++y) {
    for (int xx = 0; xx < x.width; ++xx) {
      const auto src = x.data.col(static_cast<Eigen::Index>(y) * x.width + xx);
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
          auto dst = out.data.col(static_cast<Eigen::Index>(2 * y + i) * out.width + 2 * xx + j);
          for (int ch = 0; ch < c; ++ch) dst(ch) = src(ch * 4 + i * 2 + j);
        }
      }
    }
  }
  return out;
}

FeatureMap pixel_unshuffle(const FeatureMap& x) {
  const int c = x.channels();
  FeatureMap out;
  out.height = x.height / 2;
  out.width = x.width / 2;
  out.data.resize(4 * c, static_cast<Eigen::Index>(out.height) * out.width);
  for (int y = 0; y < out.height; ++y) {
    for (int xx = 0; xx < out.width; ++xx) {
      auto dst = out.data.col(static_cast<Eigen::Index>(y) * out.width + xx);
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
          const auto src = x.data.col(static_cast<Eigen::Index>(2 * y + i) * x.width + 2 * xx + j);
          for (int ch = 0; ch < c; ++ch) dst(ch * 4 + i * 2 + j) = src(ch);
        }
      }
    }
  }
  return out;
}

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b) {
  if (a.height != b.height || a.width != b.width) {
    fail(ErrorKind::kModelConstruction, "skip connection size mismatch");
  }
  FeatureMap out;
  out.height = a.height;
  out.width = a.width;
  out.data.resize(a.channels() + b.channels(), a.data.cols());
  out.data.topRows(a.channels()) = a.data;
  out.data.bottomRows(b.channels()) = b.data;
  return out;
}

}  // namespace caplab::nn
