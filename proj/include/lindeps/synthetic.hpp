#ifndef LINDEPS_SYNTHETIC_HPP
#define LINDEPS_SYNTHETIC_HPP

// Seeded generators for fixture models and batches.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "lindeps/model.hpp"
#include "lindeps/tensor.hpp"

namespace lindeps::synthetic {

using Rng = std::mt19937_64;

template <typename T = float>
BasicTensor<T> uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  BasicTensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T = float>
BasicTensor<T> normal(Shape shape, Rng& rng, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  BasicTensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

/// He-style initialization, scaled by fan-in.
inline Conv2D random_conv(std::size_t cin, std::size_t cout, std::size_t kernel, Rng& rng, std::size_t stride = 1,
                          std::size_t padding = 0, bool bias = true) {
  const double fan_in = static_cast<double>(cin * kernel * kernel);
  Conv2D conv{normal({cout, cin, kernel, kernel}, rng, std::sqrt(2.0 / fan_in)), std::nullopt, stride, padding};
  if (bias) conv.bias = uniform({cout}, rng, -0.1, 0.1);
  return conv;
}

inline Dense random_dense(std::size_t in, std::size_t out, Rng& rng, bool bias = true) {
  Dense dense{normal({out, in}, rng, std::sqrt(1.0 / static_cast<double>(in))), std::nullopt};
  if (bias) dense.bias = uniform({out}, rng, -0.1, 0.1);
  return dense;
}

inline BatchNorm random_batchnorm(std::size_t channels, Rng& rng) {
  return BatchNorm{uniform({channels}, rng, 0.5, 1.5), uniform({channels}, rng, -0.2, 0.2),
                   uniform({channels}, rng, -0.2, 0.2), uniform({channels}, rng, 0.5, 2.0), 1e-5f};
}

inline CalibrationBatch random_batch(std::size_t batch, const std::array<std::size_t, 3>& input, Rng& rng,
                                     std::optional<std::size_t> classes = std::nullopt) {
  CalibrationBatch b{normal({batch, input[0], input[1], input[2]}, rng), std::nullopt, classes};
  if (classes) {
    std::uniform_int_distribution<std::uint32_t> dist(0, static_cast<std::uint32_t>(*classes - 1));
    b.labels.emplace(batch);
    for (auto& l : *b.labels) l = dist(rng);
  }
  return b;
}

/// Overwrites `count` randomly placed output filters of `conv` with exact
/// linear combinations of the remaining ones and returns their indices.
///
/// With `positive_multiples`, each dependent filter is a positive multiple
/// of a single independent filter, so the dependence survives ReLU and max
/// pooling. Otherwise it is a general combination of all independent
/// filters, which is exact only on an activation-free path.
inline std::vector<std::size_t> inject_dependent_filters(Conv2D& conv, std::size_t count, Rng& rng,
                                                         bool positive_multiples) {
  const std::size_t cout = conv.out_channels();
  std::vector<std::size_t> order(cout);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> dependent(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  std::vector<std::size_t> basis(order.begin() + static_cast<std::ptrdiff_t>(count), order.end());
  std::sort(dependent.begin(), dependent.end());

  const std::size_t stride = conv.weights.size() / cout;
  std::uniform_real_distribution<double> scale(0.5, 2.0), coef(-1.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, basis.size() - 1);
  for (std::size_t d : dependent) {
    std::vector<double> alpha(basis.size(), 0.0);
    if (positive_multiples) {
      alpha[pick(rng)] = scale(rng);
    } else {
      for (auto& a : alpha) a = coef(rng);
    }
    for (std::size_t s = 0; s < stride; ++s) {
      double acc = 0.0;
      for (std::size_t i = 0; i < basis.size(); ++i) acc += alpha[i] * conv.weights[basis[i] * stride + s];
      conv.weights[d * stride + s] = static_cast<float>(acc);
    }
    if (conv.bias) {
      double acc = 0.0;
      for (std::size_t i = 0; i < basis.size(); ++i) acc += alpha[i] * (*conv.bias)[basis[i]];
      (*conv.bias)[d] = static_cast<float>(acc);
    }
  }
  return dependent;
}

struct RedundantNetOptions {
  std::array<std::size_t, 3> input{3, 16, 16};
  std::size_t channels = 16;
  std::size_t convs = 3;
  std::size_t dependent_per_layer = 4;
  std::size_t classes = 10;
  /// ReLU after every conv (dependent filters are positive multiples) or a
  /// purely linear conv stack (dependent filters are general combinations).
  bool relu = true;
};

struct RedundantNet {
  Model model;
  std::vector<std::size_t> conv_indices;
  std::vector<std::vector<std::size_t>> dependent;  // per conv
};

/// conv(3×3, pad 1) [→ReLU] repeated, then max-pool 2, flatten and dense.
/// Every conv receives injected exact dependencies.
inline RedundantNet redundant_net(std::uint64_t seed, const RedundantNetOptions& opt = {}) {
  Rng rng(seed);
  RedundantNet net;
  net.model.input_shape = opt.input;
  net.model.metadata = {{"name", "redundant-net"}, {"source", "synthetic"}, {"seed", std::to_string(seed)}};
  std::size_t cin = opt.input[0];
  for (std::size_t i = 0; i < opt.convs; ++i) {
    auto conv = random_conv(cin, opt.channels, 3, rng, 1, 1);
    net.dependent.push_back(inject_dependent_filters(conv, opt.dependent_per_layer, rng, opt.relu));
    net.conv_indices.push_back(net.model.layers.size());
    net.model.layers.emplace_back(std::move(conv));
    if (opt.relu) net.model.layers.emplace_back(Activation{});
    cin = opt.channels;
  }
  net.model.layers.emplace_back(Pool{PoolKind::max, 2, 2});
  net.model.layers.emplace_back(Flatten{});
  const std::size_t features = opt.channels * (opt.input[1] / 2) * (opt.input[2] / 2);
  net.model.layers.emplace_back(random_dense(features, opt.classes, rng));
  return net;
}

struct RandomNetOptions {
  std::array<std::size_t, 3> input{3, 16, 16};
  std::vector<std::size_t> channels{16, 16, 16};
  std::size_t classes = 10;
  bool batchnorm = true;
};

/// VGG-style block stack: conv3×3 → [BN] → ReLU, max-pool after every
/// second conv, then flatten and dense.
inline Model random_vgg(std::uint64_t seed, const RandomNetOptions& opt = {}) {
  Rng rng(seed);
  Model model;
  model.input_shape = opt.input;
  model.metadata = {{"name", "random-vgg"}, {"source", "synthetic"}, {"seed", std::to_string(seed)}};
  std::size_t cin = opt.input[0], h = opt.input[1], w = opt.input[2];
  for (std::size_t i = 0; i < opt.channels.size(); ++i) {
    model.layers.emplace_back(random_conv(cin, opt.channels[i], 3, rng, 1, 1, !opt.batchnorm));
    if (opt.batchnorm) model.layers.emplace_back(random_batchnorm(opt.channels[i], rng));
    model.layers.emplace_back(Activation{});
    if (i % 2 == 1 && h >= 4 && w >= 4) {
      model.layers.emplace_back(Pool{PoolKind::max, 2, 2});
      h /= 2;
      w /= 2;
    }
    cin = opt.channels[i];
  }
  model.layers.emplace_back(Flatten{});
  model.layers.emplace_back(random_dense(cin * h * w, opt.classes, rng));
  return model;
}

}  // namespace lindeps::synthetic

#endif  // LINDEPS_SYNTHETIC_HPP
