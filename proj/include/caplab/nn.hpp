#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace caplab::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using ConstMatMap = Eigen::Map<const Mat>;
using MatMap = Eigen::Map<Mat>;

// Named, flat parameter storage. Layers hold indices into it so weights,
// gradients and optimizer moments share one layout.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    std::vector<int> shape;
    Vec value;
  };

  std::size_t add(std::string name, std::vector<int> shape);

  std::size_t size() const { return entries_.size(); }
  const Entry& entry(std::size_t i) const { return entries_[i]; }
  Entry& entry(std::size_t i) { return entries_[i]; }
  const std::vector<Entry>& entries() const { return entries_; }

  std::size_t scalar_count() const;

  // (rows x cols) column-major view of a parameter.
  ConstMatMap matrix(std::size_t i, int rows, int cols) const {
    return ConstMatMap(entries_[i].value.data(), rows, cols);
  }

  // Zero-valued set with identical names and shapes.
  ParameterSet zeros_like() const;
  void set_zero();
  void add_scaled(const ParameterSet& other, double scale);
  bool all_finite() const;

 private:
  std::vector<Entry> entries_;
};

// Channels x pixels, pixel index y * width + x.
struct FeatureMap {
  int height = 0;
  int width = 0;
  Mat data;

  int channels() const { return static_cast<int>(data.rows()); }
};

double gelu(double x);
double gelu_grad(double x);

enum class Activation { kGelu, kIdentity };

Mat activate(const Mat& x, Activation act);
// Gradient through the activation given its pre-activation input.
Mat activate_backward(const Mat& pre, const Mat& dout, Activation act);

// k x k convolution with zero padding, weight laid out as
// (out, (ky * k + kx) * in + ci).
struct Conv2d {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int padding = 1;
  std::size_t weight = 0;
  std::size_t bias = 0;

  static Conv2d create(ParameterSet& params, const std::string& name, int in,
                       int out, int kernel, int stride);

  struct Cache {
    int in_height = 0;
    int in_width = 0;
    Mat columns;
  };

  int out_size(int n) const { return (n + 2 * padding - kernel) / stride + 1; }
  FeatureMap forward(const ParameterSet& p, const FeatureMap& x,
                     Cache* cache) const;
  // Accumulates parameter gradients; returns d input unless need_input is
  // false.
  FeatureMap backward(const ParameterSet& p, const Cache& cache,
                      const FeatureMap& dout, ParameterSet& grads,
                      bool need_input = true) const;
};

// y = x W^T + b over rows of x; W is (out x in).
struct Linear {
  int in_features = 0;
  int out_features = 0;
  std::size_t weight = 0;
  std::size_t bias = 0;

  static Linear create(ParameterSet& params, const std::string& name, int in,
                       int out);
  Mat forward(const ParameterSet& p, const Mat& x) const;
  Mat backward(const ParameterSet& p, const Mat& x, const Mat& dout,
               ParameterSet& grads) const;
};

// Per-row normalization over the feature axis.
struct LayerNorm {
  int features = 0;
  double eps = 1e-5;
  std::size_t gamma = 0;
  std::size_t beta = 0;

  static LayerNorm create(ParameterSet& params, const std::string& name,
                          int features);

  struct Cache {
    Mat normalized;
    Vec inv_std;
  };
  Mat forward(const ParameterSet& p, const Mat& x, Cache* cache) const;
  Mat backward(const ParameterSet& p, const Cache& cache, const Mat& dout,
               ParameterSet& grads) const;
};

// Depth-to-space by 2: (4c, h, w) -> (c, 2h, 2w).
FeatureMap pixel_shuffle(const FeatureMap& x);
FeatureMap pixel_unshuffle(const FeatureMap& x);

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b);

}  // namespace caplab::nn
