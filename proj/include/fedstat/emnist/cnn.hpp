#pragma once

// Three-layer convolutional classifier conditioned on client statistics:
// conv1 -> relu -> pool -> conv2 -> relu -> [pool] -> conv3 -> relu ->
// flatten -> concat(mu) -> dense -> logits.

#include <cstddef>
#include <span>
#include <vector>

#include "fedstat/federation.hpp"
#include "fedstat/models.hpp"
#include "fedstat/numerics.hpp"
#include "fedstat/rng.hpp"
#include "fedstat/shard.hpp"

namespace fedstat::emnist {

struct FeatureMap {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
  bool same_shape(const FeatureMap& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

/// Square kernels, weight laid out [out][in][ky][kx].
struct ConvLayer {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t kernel = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  double w(std::size_t o, std::size_t c, std::size_t ky, std::size_t kx) const {
    return weight[((o * in_channels + c) * kernel + ky) * kernel + kx];
  }
};

/// Valid cross-correlation, stride 1, no padding.
FeatureMap conv2d_forward(const FeatureMap& in, const ConvLayer& layer);

struct ConvGrads {
  FeatureMap input;
  std::vector<double> weight;
  std::vector<double> bias;
};

ConvGrads conv2d_backward(const FeatureMap& in, const ConvLayer& layer, const FeatureMap& grad_out,
                          bool want_input_grad = true);

struct Pooled {
  FeatureMap out;
  /// Flat input index of each output's maximum; ties go to the lowest index.
  std::vector<std::size_t> argmax;
};

/// 2x2 stride-2 max pooling. An odd trailing row or column is dropped.
Pooled maxpool2(const FeatureMap& in);

FeatureMap maxpool2_backward(const FeatureMap& grad_out, std::span<const std::size_t> argmax,
                             const FeatureMap& input);

void relu_inplace(FeatureMap& m);

struct CnnArch {
  std::size_t height = 14;
  std::size_t width = 14;
  std::size_t conv1 = 8;
  std::size_t conv2 = 16;
  std::size_t conv3 = 32;
  std::size_t kernel = 3;
  std::size_t mu_dim = 0;
  std::size_t classes = 62;

  /// The second pool is applied only when the pooled map still fits conv3.
  bool second_pool() const;
  /// Flattened conv3 output width.
  std::size_t feature_dim() const;
  /// Throws DimensionError when the kernels do not fit the input.
  void validate() const;
};

struct CnnParams {
  ConvLayer conv1;
  ConvLayer conv2;
  ConvLayer conv3;
  DenseLayer fc;  // classes x (feature_dim + mu_dim)
};

/// He-normal convolutions, dense image columns scaled by 1/sqrt(fan_in),
/// statistics columns and all biases zero.
CnnParams init_cnn(const CnnArch& arch, SeededRng& rng);

ParamSet to_param_set(const CnnParams& p);
CnnParams cnn_from_params(const ParamSet& p, const CnnArch& arch);

struct CnnCache {
  FeatureMap input;
  FeatureMap a1;  // post-relu activations
  Pooled p1;
  FeatureMap a2;
  Pooled p2;
  FeatureMap a3;
  std::vector<double> dense_in;
};

/// 62 logits for one image (row-major pixels). Fills cache when given.
std::vector<double> cnn_forward(const CnnParams& p, const CnnArch& arch, std::span<const double> image,
                                std::span<const double> mu, CnnCache* cache = nullptr);

/// Adds the gradients of one sample into grads (shaped like p).
void cnn_backward(const CnnParams& p, const CnnArch& arch, const CnnCache& cache,
                  std::span<const double> dlogits, CnnParams& grads);

CnnParams zeros_like(const CnnParams& p);

/// Cross-entropy of softmax(logits) against a class index; gradient is
/// softmax - one_hot.
LossGrad softmax_cross_entropy(std::span<const double> logits, std::size_t label);

std::size_t argmax(std::span<const double> v);

/// Training view of one client for the federation engine.
class CnnObjective final : public LocalObjective {
 public:
  CnnObjective(const CnnArch& arch, const ClientShard& shard);
  std::size_t train_size() const override { return shard_.x_train.rows(); }
  double loss_grad(ParamSet& p, std::span<const std::size_t> rows) const override;

 private:
  CnnArch arch_;
  const ClientShard& shard_;
};

/// Predicted class for every test row of a shard.
std::vector<std::size_t> cnn_predict(const ParamSet& p, const CnnArch& arch, const ClientShard& shard);

}  // namespace fedstat::emnist
