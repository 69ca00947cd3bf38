#pragma once

// Random CNN gradient-check instances kept away from relu kinks and
// max-pool ties, where central differences are not valid.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "fedstat/emnist/cnn.hpp"
#include "fedstat/numerics.hpp"

namespace oracle {

struct CnnInstance {
  fedstat::emnist::CnnParams params;
  std::vector<double> image;
  std::vector<double> mu;
  std::size_t label = 0;
};

inline double kink_distance(const fedstat::emnist::CnnParams& p, const fedstat::emnist::CnnArch& arch,
                            const fedstat::emnist::CnnCache& c) {
  using namespace fedstat::emnist;
  double d = std::numeric_limits<double>::infinity();
  auto pre = [&](const FeatureMap& in, const ConvLayer& l) {
    for (double v : conv2d_forward(in, l).data) d = std::min(d, std::abs(v));
  };
  auto gaps = [&](const FeatureMap& in) {
    for (std::size_t ch = 0; ch < in.channels; ++ch)
      for (std::size_t y = 0; y + 1 < in.height; y += 2)
        for (std::size_t x = 0; x + 1 < in.width; x += 2) {
          double v[4] = {in.at(ch, y, x), in.at(ch, y, x + 1), in.at(ch, y + 1, x), in.at(ch, y + 1, x + 1)};
          std::sort(v, v + 4);
          // A window of dead units has no gradient either way; only live ties matter.
          if (v[3] > 0.0) d = std::min(d, v[3] - v[2]);
        }
  };
  pre(c.input, p.conv1);
  gaps(c.a1);
  pre(c.p1.out, p.conv2);
  if (arch.second_pool()) {
    gaps(c.a2);
    pre(c.p2.out, p.conv3);
  } else {
    pre(c.a2, p.conv3);
  }
  return d;
}

inline CnnInstance cnn_instance(const fedstat::emnist::CnnArch& arch, fedstat::SeededRng& rng,
                                double margin = 1e-3) {
  using namespace fedstat::emnist;
  for (;;) {
    CnnInstance s;
    s.params = init_cnn(arch, rng);
    for (ConvLayer* l : {&s.params.conv1, &s.params.conv2, &s.params.conv3})
      for (double& b : l->bias) b = 0.1 * rng.normal();
    for (double& v : s.params.fc.weight.flat()) v = 0.3 * rng.normal();
    for (double& v : s.params.fc.bias) v = 0.1 * rng.normal();
    s.image.resize(arch.height * arch.width);
    for (double& v : s.image) v = rng.uniform();
    s.mu.resize(arch.mu_dim);
    for (double& v : s.mu) v = rng.normal();
    s.label = rng.uniform_index(arch.classes);
    CnnCache cache;
    cnn_forward(s.params, arch, s.image, s.mu, &cache);
    if (kink_distance(s.params, arch, cache) > margin) return s;
  }
}

// Max relative error between backprop and central differences over every parameter.
inline double cnn_gradient_error(const fedstat::emnist::CnnArch& arch, const CnnInstance& s, double h = 1e-5) {
  using namespace fedstat;
  using namespace fedstat::emnist;
  CnnCache cache;
  const auto logits = cnn_forward(s.params, arch, s.image, s.mu, &cache);
  auto grads = zeros_like(s.params);
  cnn_backward(s.params, arch, cache, softmax_cross_entropy(logits, s.label).grad, grads);
  const auto analytic = to_param_set(grads);
  const auto numeric = finite_diff_grad(
      [&](const ParamSet& q) {
        return softmax_cross_entropy(cnn_forward(cnn_from_params(q, arch), arch, s.image, s.mu), s.label).loss;
      },
      to_param_set(s.params), h);
  double worst = 0.0;
  for (const auto& [name, g] : numeric) worst = std::max(worst, max_relative_error(analytic.value(name), g));
  return worst;
}

}  // namespace oracle
