#include "fedstat/emnist/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedstat/errors.hpp"

namespace fedstat::emnist {

namespace {

void check_conv(const FeatureMap& in, const ConvLayer& layer, const char* who) {
  if (in.channels != layer.in_channels) {
    throw DimensionError(std::string(who) + ": input has " + std::to_string(in.channels) +
                         " channels, kernel expects " + std::to_string(layer.in_channels));
  }
  if (layer.kernel == 0 || layer.kernel > in.height || layer.kernel > in.width) {
    throw DimensionError(std::string(who) + ": kernel " + std::to_string(layer.kernel) +
                         " does not fit " + std::to_string(in.height) + "x" + std::to_string(in.width));
  }
  if (layer.weight.size() != layer.out_channels * layer.in_channels * layer.kernel * layer.kernel ||
      layer.bias.size() != layer.out_channels) {
    throw DimensionError(std::string(who) + ": kernel storage does not match its shape");
  }
}

// Shared by the public backward and the fused trainer path.
void conv_backward_into(const FeatureMap& in, const ConvLayer& layer, const FeatureMap& g,
                        std::vector<double>& dw, std::vector<double>& db, FeatureMap* din) {
  const std::size_t k = layer.kernel;
  for (std::size_t o = 0; o < layer.out_channels; ++o) {
    for (std::size_t y = 0; y < g.height; ++y) {
      for (std::size_t x = 0; x < g.width; ++x) {
        const double go = g.at(o, y, x);
        if (go == 0.0) continue;
        db[o] += go;
        for (std::size_t c = 0; c < layer.in_channels; ++c) {
          const std::size_t wbase = (o * layer.in_channels + c) * k * k;
          for (std::size_t ky = 0; ky < k; ++ky) {
            const double* irow = &in.data[(c * in.height + y + ky) * in.width + x];
            double* dwrow = &dw[wbase + ky * k];
            for (std::size_t kx = 0; kx < k; ++kx) dwrow[kx] += go * irow[kx];
            if (din) {
              double* drow = &din->data[(c * in.height + y + ky) * in.width + x];
              const double* wrow = &layer.weight[wbase + ky * k];
              for (std::size_t kx = 0; kx < k; ++kx) drow[kx] += go * wrow[kx];
            }
          }
        }
      }
    }
  }
}

void relu_backward(FeatureMap& g, const FeatureMap& activated) {
  for (std::size_t i = 0; i < g.data.size(); ++i)
    if (activated.data[i] <= 0.0) g.data[i] = 0.0;
}

ConvLayer make_conv(std::size_t out, std::size_t in, std::size_t k) {
  ConvLayer c;
  c.out_channels = out;
  c.in_channels = in;
  c.kernel = k;
  c.weight.assign(out * in * k * k, 0.0);
  c.bias.assign(out, 0.0);
  return c;
}

Tensor2 conv_weight_tensor(const ConvLayer& c) {
  return Tensor2(c.out_channels, c.in_channels * c.kernel * c.kernel, c.weight);
}

ConvLayer conv_from(const ParamSet& p, const std::string& name, std::size_t out, std::size_t in,
                    std::size_t k) {
  ConvLayer c = make_conv(out, in, k);
  const Tensor2& w = p.value(name + ".weight");
  const Tensor2& b = p.value(name + ".bias");
  if (w.rows() != out || w.cols() != in * k * k || b.size() != out) {
    throw DimensionError("cnn_from_params: '" + name + "' has shape " + w.shape_str());
  }
  std::copy(w.flat().begin(), w.flat().end(), c.weight.begin());
  std::copy(b.flat().begin(), b.flat().end(), c.bias.begin());
  return c;
}

void write_conv_grad(ParamSet& p, const std::string& name, const ConvLayer& g) {
  Tensor2& w = p.grad(name + ".weight");
  std::copy(g.weight.begin(), g.weight.end(), w.flat().begin());
  Tensor2& b = p.grad(name + ".bias");
  std::copy(g.bias.begin(), g.bias.end(), b.flat().begin());
}

std::size_t conv_out(std::size_t n, std::size_t k) { return n >= k ? n - k + 1 : 0; }

}  // namespace

FeatureMap conv2d_forward(const FeatureMap& in, const ConvLayer& layer) {
  check_conv(in, layer, "conv2d_forward");
  const std::size_t k = layer.kernel;
  FeatureMap out(layer.out_channels, in.height - k + 1, in.width - k + 1);
  for (std::size_t o = 0; o < layer.out_channels; ++o) {
    for (std::size_t y = 0; y < out.height; ++y) {
      for (std::size_t x = 0; x < out.width; ++x) {
        double acc = layer.bias[o];
        for (std::size_t c = 0; c < layer.in_channels; ++c) {
          const std::size_t wbase = (o * layer.in_channels + c) * k * k;
          for (std::size_t ky = 0; ky < k; ++ky) {
            const double* irow = &in.data[(c * in.height + y + ky) * in.width + x];
            const double* wrow = &layer.weight[wbase + ky * k];
            for (std::size_t kx = 0; kx < k; ++kx) acc += irow[kx] * wrow[kx];
          }
        }
        out.at(o, y, x) = acc;
      }
    }
  }
  return out;
}

ConvGrads conv2d_backward(const FeatureMap& in, const ConvLayer& layer, const FeatureMap& grad_out,
                          bool want_input_grad) {
  check_conv(in, layer, "conv2d_backward");
  if (grad_out.channels != layer.out_channels || grad_out.height != in.height - layer.kernel + 1 ||
      grad_out.width != in.width - layer.kernel + 1) {
    throw DimensionError("conv2d_backward: output gradient shape does not match the layer");
  }
  ConvGrads g;
  g.weight.assign(layer.weight.size(), 0.0);
  g.bias.assign(layer.bias.size(), 0.0);
  if (want_input_grad) g.input = FeatureMap(in.channels, in.height, in.width);
  conv_backward_into(in, layer, grad_out, g.weight, g.bias, want_input_grad ? &g.input : nullptr);
  return g;
}

Pooled maxpool2(const FeatureMap& in) {
  Pooled p;
  p.out = FeatureMap(in.channels, in.height / 2, in.width / 2);
  p.argmax.resize(p.out.data.size());
  std::size_t idx = 0;
  for (std::size_t c = 0; c < in.channels; ++c) {
    for (std::size_t y = 0; y < p.out.height; ++y) {
      for (std::size_t x = 0; x < p.out.width; ++x, ++idx) {
        // Scan in ascending flat order; strict > keeps the first maximum.
        std::size_t best = (c * in.height + 2 * y) * in.width + 2 * x;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t j = (c * in.height + 2 * y + dy) * in.width + 2 * x + dx;
            if (in.data[j] > in.data[best]) best = j;
          }
        }
        p.out.data[idx] = in.data[best];
        p.argmax[idx] = best;
      }
    }
  }
  return p;
}

FeatureMap maxpool2_backward(const FeatureMap& grad_out, std::span<const std::size_t> argmax,
                             const FeatureMap& input) {
  if (argmax.size() != grad_out.data.size()) {
    throw DimensionError("maxpool2_backward: argmax length does not match the gradient");
  }
  FeatureMap g(input.channels, input.height, input.width);
  for (std::size_t i = 0; i < argmax.size(); ++i) g.data[argmax[i]] += grad_out.data[i];
  return g;
}

void relu_inplace(FeatureMap& m) {
  for (double& v : m.data) v = v > 0.0 ? v : 0.0;
}

bool CnnArch::second_pool() const {
  const std::size_t h = conv_out(conv_out(height, kernel) / 2, kernel);
  const std::size_t w = conv_out(conv_out(width, kernel) / 2, kernel);
  return h / 2 >= kernel && w / 2 >= kernel;
}

std::size_t CnnArch::feature_dim() const {
  std::size_t h = conv_out(conv_out(height, kernel) / 2, kernel);
  std::size_t w = conv_out(conv_out(width, kernel) / 2, kernel);
  if (second_pool()) {
    h /= 2;
    w /= 2;
  }
  return conv3 * conv_out(h, kernel) * conv_out(w, kernel);
}

void CnnArch::validate() const {
  if (kernel == 0 || conv1 == 0 || conv2 == 0 || conv3 == 0 || classes == 0) {
    throw DimensionError("cnn: channel counts and kernel must be positive");
  }
  if (feature_dim() == 0) {
    throw DimensionError("cnn: a " + std::to_string(height) + "x" + std::to_string(width) +
                         " input is too small for three " + std::to_string(kernel) + "x" +
                         std::to_string(kernel) + " convolutions");
  }
}

CnnParams init_cnn(const CnnArch& arch, SeededRng& rng) {
  arch.validate();
  CnnParams p;
  p.conv1 = make_conv(arch.conv1, 1, arch.kernel);
  p.conv2 = make_conv(arch.conv2, arch.conv1, arch.kernel);
  p.conv3 = make_conv(arch.conv3, arch.conv2, arch.kernel);
  for (ConvLayer* c : {&p.conv1, &p.conv2, &p.conv3}) {
    const double sd = std::sqrt(2.0 / static_cast<double>(c->in_channels * c->kernel * c->kernel));
    for (double& w : c->weight) w = sd * rng.normal();
  }
  const std::size_t feat = arch.feature_dim();
  p.fc.weight = Tensor2(arch.classes, feat + arch.mu_dim);
  p.fc.bias.assign(arch.classes, 0.0);
  const double sd = std::sqrt(1.0 / static_cast<double>(feat));
  for (std::size_t o = 0; o < arch.classes; ++o)
    for (std::size_t i = 0; i < feat; ++i) p.fc.weight(o, i) = sd * rng.normal();
  return p;
}

ParamSet to_param_set(const CnnParams& p) {
  ParamSet s;
  s.add("conv1.weight", conv_weight_tensor(p.conv1));
  s.add("conv1.bias", Tensor2::row_vector(p.conv1.bias));
  s.add("conv2.weight", conv_weight_tensor(p.conv2));
  s.add("conv2.bias", Tensor2::row_vector(p.conv2.bias));
  s.add("conv3.weight", conv_weight_tensor(p.conv3));
  s.add("conv3.bias", Tensor2::row_vector(p.conv3.bias));
  s.add("fc.weight", p.fc.weight);
  s.add("fc.bias", Tensor2::row_vector(p.fc.bias));
  return s;
}

CnnParams cnn_from_params(const ParamSet& p, const CnnArch& arch) {
  CnnParams c;
  c.conv1 = conv_from(p, "conv1", arch.conv1, 1, arch.kernel);
  c.conv2 = conv_from(p, "conv2", arch.conv2, arch.conv1, arch.kernel);
  c.conv3 = conv_from(p, "conv3", arch.conv3, arch.conv2, arch.kernel);
  c.fc.weight = p.value("fc.weight");
  const Tensor2& b = p.value("fc.bias");
  c.fc.bias.assign(b.flat().begin(), b.flat().end());
  if (c.fc.weight.rows() != arch.classes || c.fc.weight.cols() != arch.feature_dim() + arch.mu_dim ||
      c.fc.bias.size() != arch.classes) {
    throw DimensionError("cnn_from_params: 'fc.weight' has shape " + c.fc.weight.shape_str());
  }
  return c;
}

CnnParams zeros_like(const CnnParams& p) {
  CnnParams z;
  z.conv1 = make_conv(p.conv1.out_channels, p.conv1.in_channels, p.conv1.kernel);
  z.conv2 = make_conv(p.conv2.out_channels, p.conv2.in_channels, p.conv2.kernel);
  z.conv3 = make_conv(p.conv3.out_channels, p.conv3.in_channels, p.conv3.kernel);
  z.fc.weight = Tensor2(p.fc.weight.rows(), p.fc.weight.cols());
  z.fc.bias.assign(p.fc.bias.size(), 0.0);
  return z;
}

std::vector<double> cnn_forward(const CnnParams& p, const CnnArch& arch, std::span<const double> image,
                                std::span<const double> mu, CnnCache* cache) {
  if (image.size() != arch.height * arch.width) {
    throw DimensionError("cnn_forward: image has " + std::to_string(image.size()) + " pixels, expected " +
                         std::to_string(arch.height * arch.width));
  }
  if (mu.size() != arch.mu_dim) {
    throw DimensionError("cnn_forward: statistics vector has length " + std::to_string(mu.size()) +
                         ", expected " + std::to_string(arch.mu_dim));
  }
  CnnCache local;
  CnnCache& c = cache ? *cache : local;
  c.input = FeatureMap(1, arch.height, arch.width);
  std::copy(image.begin(), image.end(), c.input.data.begin());

  c.a1 = conv2d_forward(c.input, p.conv1);
  relu_inplace(c.a1);
  c.p1 = maxpool2(c.a1);
  c.a2 = conv2d_forward(c.p1.out, p.conv2);
  relu_inplace(c.a2);
  const bool pool2 = arch.second_pool();
  if (pool2) {
    c.p2 = maxpool2(c.a2);
  } else {
    c.p2 = Pooled{};
  }
  c.a3 = conv2d_forward(pool2 ? c.p2.out : c.a2, p.conv3);
  relu_inplace(c.a3);

  c.dense_in.assign(c.a3.data.begin(), c.a3.data.end());
  c.dense_in.insert(c.dense_in.end(), mu.begin(), mu.end());
  if (c.dense_in.size() != p.fc.weight.cols()) {
    throw DimensionError("cnn_forward: dense layer expects " + std::to_string(p.fc.weight.cols()) +
                         " inputs, got " + std::to_string(c.dense_in.size()));
  }
  std::vector<double> logits(p.fc.weight.rows());
  for (std::size_t o = 0; o < logits.size(); ++o) {
    auto w = p.fc.weight.row(o);
    double acc = p.fc.bias[o];
    for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * c.dense_in[i];
    logits[o] = acc;
  }
  return logits;
}

void cnn_backward(const CnnParams& p, const CnnArch& arch, const CnnCache& c,
                  std::span<const double> dlogits, CnnParams& g) {
  if (dlogits.size() != p.fc.weight.rows()) throw DimensionError("cnn_backward: logit gradient length");
  const std::size_t feat = c.a3.data.size();
  std::vector<double> dfeat(feat, 0.0);
  for (std::size_t o = 0; o < dlogits.size(); ++o) {
    const double d = dlogits[o];
    if (d == 0.0) continue;
    g.fc.bias[o] += d;
    auto grow = g.fc.weight.row(o);
    auto wrow = p.fc.weight.row(o);
    for (std::size_t i = 0; i < grow.size(); ++i) grow[i] += d * c.dense_in[i];
    for (std::size_t i = 0; i < feat; ++i) dfeat[i] += d * wrow[i];
  }

  FeatureMap d3(c.a3.channels, c.a3.height, c.a3.width);
  d3.data = std::move(dfeat);
  relu_backward(d3, c.a3);

  const bool pool2 = arch.second_pool();
  const FeatureMap& in3 = pool2 ? c.p2.out : c.a2;
  FeatureMap din3(in3.channels, in3.height, in3.width);
  conv_backward_into(in3, p.conv3, d3, g.conv3.weight, g.conv3.bias, &din3);

  FeatureMap d2 = pool2 ? maxpool2_backward(din3, c.p2.argmax, c.a2) : std::move(din3);
  relu_backward(d2, c.a2);
  FeatureMap dp1(c.p1.out.channels, c.p1.out.height, c.p1.out.width);
  conv_backward_into(c.p1.out, p.conv2, d2, g.conv2.weight, g.conv2.bias, &dp1);

  FeatureMap d1 = maxpool2_backward(dp1, c.p1.argmax, c.a1);
  relu_backward(d1, c.a1);
  // The image gradient is never needed.
  conv_backward_into(c.input, p.conv1, d1, g.conv1.weight, g.conv1.bias, nullptr);
}

LossGrad softmax_cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw ArgumentError("softmax_cross_entropy: label " + std::to_string(label) + " out of range");
  }
  auto probs = softmax(logits);
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - m);
  LossGrad out;
  out.loss = std::log(z) + m - logits[label];
  probs[label] -= 1.0;
  out.grad = std::move(probs);
  return out;
}

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw ArgumentError("argmax: empty input");
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

CnnObjective::CnnObjective(const CnnArch& arch, const ClientShard& shard) : arch_(arch), shard_(shard) {
  arch_.validate();
  if (shard_.x_train.cols() != arch_.height * arch_.width) {
    throw DimensionError("CnnObjective: shard rows are not " + std::to_string(arch_.height) + "x" +
                         std::to_string(arch_.width) + " images");
  }
}

double CnnObjective::loss_grad(ParamSet& p, std::span<const std::size_t> rows) const {
  if (rows.empty()) throw ArgumentError("CnnObjective: empty batch");
  const CnnParams cp = cnn_from_params(p, arch_);
  CnnParams g = zeros_like(cp);
  const auto mu = shard_.mu();
  const double inv = 1.0 / static_cast<double>(rows.size());
  CnnCache cache;
  double loss = 0.0;
  // Ascending batch order fixes the reduction order.
  for (std::size_t r : rows) {
    const auto logits = cnn_forward(cp, arch_, shard_.x_train.row(r), mu, &cache);
    auto lg = softmax_cross_entropy(logits, static_cast<std::size_t>(shard_.y_train[r]));
    loss += lg.loss * inv;
    for (double& v : lg.grad) v *= inv;
    cnn_backward(cp, arch_, cache, lg.grad, g);
  }
  write_conv_grad(p, "conv1", g.conv1);
  write_conv_grad(p, "conv2", g.conv2);
  write_conv_grad(p, "conv3", g.conv3);
  p.grad("fc.weight") = g.fc.weight;
  std::copy(g.fc.bias.begin(), g.fc.bias.end(), p.grad("fc.bias").flat().begin());
  return loss;
}

std::vector<std::size_t> cnn_predict(const ParamSet& p, const CnnArch& arch, const ClientShard& shard) {
  const CnnParams cp = cnn_from_params(p, arch);
  const auto mu = shard.mu();
  CnnCache cache;
  std::vector<std::size_t> out(shard.x_test.rows());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = argmax(cnn_forward(cp, arch, shard.x_test.row(r), mu, &cache));
  return out;
}

}  // namespace fedstat::emnist
