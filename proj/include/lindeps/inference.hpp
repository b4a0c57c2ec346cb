#ifndef LINDEPS_INFERENCE_HPP
#define LINDEPS_INFERENCE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lindeps/errors.hpp"
#include "lindeps/model.hpp"
#include "lindeps/tensor.hpp"

namespace lindeps {

/// Captured inputs of Conv2D/Dense layers, keyed by consumer layer index.
struct ForwardTrace {
  Tensor32 logits;
  std::map<std::size_t, Tensor32> captures;
};

namespace detail {

/// Unfolds one C×H×W image into a (C·p·p)×(H_out·W_out) column matrix.
/// Rows are ordered channel-major, then kernel row, then kernel column,
/// matching the C_out×C_in×p×p weight layout.
inline void im2col(const float* image, std::size_t channels, std::size_t height, std::size_t width,
                   std::size_t kernel, std::size_t stride, std::size_t padding, std::size_t out_h,
                   std::size_t out_w, std::vector<float>& cols) {
  const std::size_t spatial = out_h * out_w;
  cols.assign(channels * kernel * kernel * spatial, 0.0f);
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    const float* plane = image + c * height * width;
    for (std::size_t ky = 0; ky < kernel; ++ky) {
      for (std::size_t kx = 0; kx < kernel; ++kx, ++row) {
        float* dst = cols.data() + row * spatial;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) continue;
            dst[oy * out_w + ox] = plane[iy * static_cast<std::ptrdiff_t>(width) + ix];
          }
        }
      }
    }
  }
}

inline Tensor32 run_conv(const Conv2D& conv, const Tensor32& x) {
  const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = conv.out_channels(), k = conv.kernel();
  const std::size_t oh = *window_extent(h, k, conv.stride, conv.padding);
  const std::size_t ow = *window_extent(w, k, conv.stride, conv.padding);
  const std::size_t spatial = oh * ow, depth = cin * k * k;

  Tensor32 out({batch, cout, oh, ow});
  std::vector<float> cols;
  std::vector<double> acc(spatial);
  const float* weights = conv.weights.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(x.data().data() + b * cin * h * w, cin, h, w, k, conv.stride, conv.padding, oh, ow, cols);
    for (std::size_t o = 0; o < cout; ++o) {
      std::fill(acc.begin(), acc.end(), conv.bias ? static_cast<double>((*conv.bias)[o]) : 0.0);
      const float* wrow = weights + o * depth;
      for (std::size_t r = 0; r < depth; ++r) {
        const double wv = wrow[r];
        const float* src = cols.data() + r * spatial;
        for (std::size_t s = 0; s < spatial; ++s) acc[s] += wv * static_cast<double>(src[s]);
      }
      float* dst = out.data().data() + (b * cout + o) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) dst[s] = static_cast<float>(acc[s]);
    }
  }
  return out;
}

inline Tensor32 run_batchnorm(const BatchNorm& bn, Tensor32 x) {
  const std::size_t batch = x.dim(0), channels = x.dim(1), plane = x.dim(2) * x.dim(3);
  for (std::size_t c = 0; c < channels; ++c) {
    const double scale = static_cast<double>(bn.gamma[c]) /
                         std::sqrt(static_cast<double>(bn.running_var[c]) + static_cast<double>(bn.epsilon));
    const double mean = bn.running_mean[c], shift = bn.beta[c];
    for (std::size_t b = 0; b < batch; ++b) {
      float* p = x.data().data() + (b * channels + c) * plane;
      for (std::size_t s = 0; s < plane; ++s) {
        p[s] = static_cast<float>((static_cast<double>(p[s]) - mean) * scale + shift);
      }
    }
  }
  return x;
}

inline Tensor32 run_pool(const Pool& pool, const Tensor32& x) {
  const std::size_t batch = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = *window_extent(h, pool.window, pool.stride, 0);
  const std::size_t ow = *window_extent(w, pool.window, pool.stride, 0);
  Tensor32 out({batch, channels, oh, ow});
  const double area = static_cast<double>(pool.window * pool.window);
  for (std::size_t bc = 0; bc < batch * channels; ++bc) {
    const float* src = x.data().data() + bc * h * w;
    float* dst = out.data().data() + bc * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const float* window = src + oy * pool.stride * w + ox * pool.stride;
        if (pool.kind == PoolKind::max) {
          float best = -std::numeric_limits<float>::infinity();
          for (std::size_t ky = 0; ky < pool.window; ++ky)
            for (std::size_t kx = 0; kx < pool.window; ++kx) best = std::max(best, window[ky * w + kx]);
          dst[oy * ow + ox] = best;
        } else {
          double sum = 0.0;
          for (std::size_t ky = 0; ky < pool.window; ++ky)
            for (std::size_t kx = 0; kx < pool.window; ++kx) sum += window[ky * w + kx];
          dst[oy * ow + ox] = static_cast<float>(sum / area);
        }
      }
    }
  }
  return out;
}

inline Tensor32 run_dense(const Dense& dense, const Tensor32& x) {
  const std::size_t batch = x.dim(0), in = dense.in_features(), outf = dense.out_features();
  Tensor32 out({batch, outf});
  for (std::size_t b = 0; b < batch; ++b) {
    const float* src = x.data().data() + b * in;
    for (std::size_t o = 0; o < outf; ++o) {
      const float* wrow = dense.weights.data().data() + o * in;
      double acc = dense.bias ? static_cast<double>((*dense.bias)[o]) : 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += static_cast<double>(wrow[i]) * static_cast<double>(src[i]);
      out(b, o) = static_cast<float>(acc);
    }
  }
  return out;
}

}  // namespace detail

/// Applies one layer to a batched activation (B×C×H×W or B×I).
inline Tensor32 run_layer(const LayerSpec& layer, Tensor32 x) {
  return std::visit(
      [&](const auto& l) -> Tensor32 {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Conv2D>) {
          return detail::run_conv(l, x);
        } else if constexpr (std::is_same_v<L, BatchNorm>) {
          return detail::run_batchnorm(l, std::move(x));
        } else if constexpr (std::is_same_v<L, Activation>) {
          for (float& v : x.data()) v = v < 0.0f ? 0.0f : v;  // NaN passes through
          return x;
        } else if constexpr (std::is_same_v<L, Pool>) {
          return detail::run_pool(l, x);
        } else if constexpr (std::is_same_v<L, Flatten>) {
          const std::size_t batch = x.dim(0);
          const std::size_t features = x.size() / batch;
          return std::move(x).reshaped({batch, features});
        } else {
          return detail::run_dense(l, x);
        }
      },
      layer);
}

namespace detail {

inline void check_input(const Model& model, const Tensor32& images) {
  const auto [c, h, w] = model.input_shape;
  if (images.rank() != 4 || images.dim(1) != c || images.dim(2) != h || images.dim(3) != w) {
    throw ShapeError("batch shape " + shape_string(images.shape()) + " does not match model input (" +
                     std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")");
  }
}

inline bool is_consumer(const LayerSpec& layer) {
  return std::holds_alternative<Conv2D>(layer) || std::holds_alternative<Dense>(layer);
}

}  // namespace detail

/// Runs layers [first, end) on an activation that is the input of layer
/// `first`. Used to replay a network suffix from a captured tensor.
inline Tensor32 forward_from(const Model& model, std::size_t first, Tensor32 activation) {
  for (std::size_t i = first; i < model.layers.size(); ++i) {
    activation = run_layer(model.layers[i], std::move(activation));
  }
  return activation;
}

/// Forward pass capturing the input of each tapped Conv2D/Dense layer.
inline ForwardTrace forward_with_taps(const Model& model, const Tensor32& images,
                                      std::span<const std::size_t> taps) {
  validate_classifier(model);
  detail::check_input(model, images);
  for (std::size_t tap : taps) {
    if (tap >= model.layers.size() || !detail::is_consumer(model.layers[tap])) {
      throw ShapeError("tap " + std::to_string(tap) + " does not address a Conv2D or Dense layer");
    }
  }
  ForwardTrace trace;
  Tensor32 x = images;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (std::find(taps.begin(), taps.end(), i) != taps.end()) trace.captures.emplace(i, x);
    x = run_layer(model.layers[i], std::move(x));
  }
  trace.logits = std::move(x);
  return trace;
}

/// Logits (B×classes) for a batch of images.
inline Tensor32 forward(const Model& model, const Tensor32& images) {
  return forward_with_taps(model, images, {}).logits;
}

}  // namespace lindeps

#endif  // LINDEPS_INFERENCE_HPP
