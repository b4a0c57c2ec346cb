#ifndef LINDEPS_MODEL_HPP
#define LINDEPS_MODEL_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "lindeps/errors.hpp"
#include "lindeps/tensor.hpp"

namespace lindeps {

/// Calibration batch size used when none is specified.
inline constexpr std::size_t kDefaultBatchSize = 256;

struct Conv2D {
  Tensor32 weights;  // C_out×C_in×p×p
  std::optional<Tensor32> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_channels() const { return weights.dim(0); }
  std::size_t in_channels() const { return weights.dim(1); }
  std::size_t kernel() const { return weights.dim(2); }

  friend bool operator==(const Conv2D&, const Conv2D&) = default;
};

struct BatchNorm {
  Tensor32 gamma, beta, running_mean, running_var;
  float epsilon = 1e-5f;

  std::size_t channels() const { return gamma.size(); }

  friend bool operator==(const BatchNorm&, const BatchNorm&) = default;
};

enum class ActivationKind { relu };

struct Activation {
  ActivationKind kind = ActivationKind::relu;
  friend bool operator==(const Activation&, const Activation&) = default;
};

enum class PoolKind { max, avg };

struct Pool {
  PoolKind kind = PoolKind::max;
  std::size_t window = 2;
  std::size_t stride = 2;
  friend bool operator==(const Pool&, const Pool&) = default;
};

/// Channel-major flattening: index = c·(H·W) + y·W + x.
struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};

struct Dense {
  Tensor32 weights;  // O×I
  std::optional<Tensor32> bias;

  std::size_t out_features() const { return weights.dim(0); }
  std::size_t in_features() const { return weights.dim(1); }

  friend bool operator==(const Dense&, const Dense&) = default;
};

using LayerSpec = std::variant<Conv2D, BatchNorm, Activation, Pool, Flatten, Dense>;

inline const char* layer_name(const LayerSpec& layer) {
  return std::visit(
      [](const auto& l) -> const char* {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Conv2D>) return "conv2d";
        else if constexpr (std::is_same_v<L, BatchNorm>) return "batchnorm";
        else if constexpr (std::is_same_v<L, Activation>) return "relu";
        else if constexpr (std::is_same_v<L, Pool>) return l.kind == PoolKind::max ? "maxpool" : "avgpool";
        else if constexpr (std::is_same_v<L, Flatten>) return "flatten";
        else return "dense";
      },
      layer);
}

struct Model {
  std::array<std::size_t, 3> input_shape{};  // (C, H, W)
  std::vector<LayerSpec> layers;
  std::map<std::string, std::string> metadata;

  friend bool operator==(const Model&, const Model&) = default;
};

/// Images plus optional labels. Labels are validated against num_classes
/// when both are present.
struct CalibrationBatch {
  Tensor32 images;  // B×C×H×W
  std::optional<std::vector<std::uint32_t>> labels;
  std::optional<std::size_t> num_classes;

  std::size_t size() const { return images.dim(0); }

  friend bool operator==(const CalibrationBatch&, const CalibrationBatch&) = default;
};

/// Activation shape between layers: (C, H, W) or a flat feature vector.
struct ActShape {
  std::size_t channels = 0;
  std::size_t height = 1;
  std::size_t width = 1;
  bool flat = false;

  std::size_t volume() const { return channels * height * width; }

  Shape dims() const { return flat ? Shape{channels} : Shape{channels, height, width}; }

  friend bool operator==(const ActShape&, const ActShape&) = default;
};

inline std::string to_string(const ActShape& s) { return shape_string(s.dims()); }

/// Output extent of a sliding window; nullopt when the window does not fit.
inline std::optional<std::size_t> window_extent(std::size_t in, std::size_t k,
                                                std::size_t stride, std::size_t padding) {
  if (stride == 0 || in + 2 * padding < k) return std::nullopt;
  return (in + 2 * padding - k) / stride + 1;
}

/// Shape after each layer; entry 0 is the input shape.
using ShapeTrace = std::vector<ActShape>;

namespace detail {

inline ShapeError layer_error(std::size_t index, const LayerSpec& layer, const std::string& msg) {
  return ShapeError("layer " + std::to_string(index) + " (" + layer_name(layer) + "): " + msg);
}

inline void check_vector(const Tensor32& t, std::size_t expected, const char* what,
                         std::size_t index, const LayerSpec& layer) {
  if (t.rank() != 1 || t.size() != expected) {
    throw layer_error(index, layer,
                      std::string(what) + " expected length " + std::to_string(expected) +
                          ", got shape " + shape_string(t.shape()));
  }
}

}  // namespace detail

/// Shape after applying `layer` to `in`. Throws ShapeError naming `index`.
inline ActShape propagate(const LayerSpec& layer, const ActShape& in, std::size_t index) {
  return std::visit(
      [&](const auto& l) -> ActShape {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Conv2D>) {
          if (l.weights.rank() != 4 || l.weights.dim(2) != l.weights.dim(3)) {
            throw detail::layer_error(index, layer,
                                      "weights must be C_out×C_in×p×p, got " +
                                          shape_string(l.weights.shape()));
          }
          if (l.stride == 0) throw detail::layer_error(index, layer, "stride must be positive");
          if (in.flat) throw detail::layer_error(index, layer, "expects a C×H×W input, got a flat vector");
          if (in.channels != l.in_channels()) {
            throw detail::layer_error(index, layer,
                                      "expected " + std::to_string(l.in_channels()) +
                                          " input channels, got " + std::to_string(in.channels));
          }
          if (l.bias) detail::check_vector(*l.bias, l.out_channels(), "bias", index, layer);
          const auto h = window_extent(in.height, l.kernel(), l.stride, l.padding);
          const auto w = window_extent(in.width, l.kernel(), l.stride, l.padding);
          if (!h || !w) {
            throw detail::layer_error(index, layer,
                                      "kernel " + std::to_string(l.kernel()) + " does not fit input " +
                                          to_string(in));
          }
          return ActShape{l.out_channels(), *h, *w, false};
        } else if constexpr (std::is_same_v<L, BatchNorm>) {
          if (in.flat) throw detail::layer_error(index, layer, "expects a C×H×W input");
          const std::size_t c = l.gamma.size();
          detail::check_vector(l.gamma, c, "gamma", index, layer);
          detail::check_vector(l.beta, c, "beta", index, layer);
          detail::check_vector(l.running_mean, c, "running_mean", index, layer);
          detail::check_vector(l.running_var, c, "running_var", index, layer);
          if (c != in.channels) {
            throw detail::layer_error(index, layer,
                                      "expected " + std::to_string(c) + " channels, got " +
                                          std::to_string(in.channels));
          }
          for (float v : l.running_var.data()) {
            if (!(v >= 0.0f)) throw detail::layer_error(index, layer, "running_var must be non-negative");
          }
          if (!(l.epsilon > 0.0f)) throw detail::layer_error(index, layer, "epsilon must be positive");
          return in;
        } else if constexpr (std::is_same_v<L, Activation>) {
          return in;
        } else if constexpr (std::is_same_v<L, Pool>) {
          if (in.flat) throw detail::layer_error(index, layer, "expects a C×H×W input");
          if (l.window == 0) throw detail::layer_error(index, layer, "window must be positive");
          const auto h = window_extent(in.height, l.window, l.stride, 0);
          const auto w = window_extent(in.width, l.window, l.stride, 0);
          if (!h || !w) {
            throw detail::layer_error(index, layer,
                                      "window " + std::to_string(l.window) + " stride " +
                                          std::to_string(l.stride) + " does not fit input " +
                                          to_string(in));
          }
          return ActShape{in.channels, *h, *w, false};
        } else if constexpr (std::is_same_v<L, Flatten>) {
          return ActShape{in.volume(), 1, 1, true};
        } else {
          if (l.weights.rank() != 2) {
            throw detail::layer_error(index, layer, "weights must be O×I, got " + shape_string(l.weights.shape()));
          }
          if (!in.flat) throw detail::layer_error(index, layer, "expects a flat input; insert a Flatten layer");
          if (in.channels != l.in_features()) {
            throw detail::layer_error(index, layer,
                                      "expected " + std::to_string(l.in_features()) + " input features, got " +
                                          std::to_string(in.channels));
          }
          if (l.bias) detail::check_vector(*l.bias, l.out_features(), "bias", index, layer);
          return ActShape{l.out_features(), 1, 1, true};
        }
      },
      layer);
}

/// Propagates the input shape through every layer.
inline ShapeTrace validate(const Model& model) {
  const auto [c, h, w] = model.input_shape;
  if (c == 0 || h == 0 || w == 0) throw ShapeError("input shape must be positive");
  ShapeTrace trace{ActShape{c, h, w, false}};
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    trace.push_back(propagate(model.layers[i], trace.back(), i));
  }
  return trace;
}

/// A runnable classifier: a valid shape chain ending in a Dense layer.
inline ShapeTrace validate_classifier(const Model& model) {
  auto trace = validate(model);
  if (model.layers.empty() || !std::holds_alternative<Dense>(model.layers.back())) {
    throw ShapeError("model must end with a Dense classifier layer");
  }
  return trace;
}

inline std::size_t num_classes(const Model& model) {
  return validate_classifier(model).back().channels;
}

inline void validate(const CalibrationBatch& batch) {
  if (batch.images.rank() != 4) {
    throw ShapeError("batch images must be B×C×H×W, got " + shape_string(batch.images.shape()));
  }
  if (!batch.labels) return;
  if (batch.labels->size() != batch.size()) {
    throw ShapeError("batch has " + std::to_string(batch.size()) + " images but " +
                     std::to_string(batch.labels->size()) + " labels");
  }
  if (batch.num_classes) {
    for (std::size_t i = 0; i < batch.labels->size(); ++i) {
      if ((*batch.labels)[i] >= *batch.num_classes) {
        throw ShapeError("label " + std::to_string((*batch.labels)[i]) + " at index " +
                         std::to_string(i) + " exceeds class count " +
                         std::to_string(*batch.num_classes));
      }
    }
  }
}

}  // namespace lindeps

#endif  // LINDEPS_MODEL_HPP
