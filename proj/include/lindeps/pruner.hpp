#ifndef LINDEPS_PRUNER_HPP
#define LINDEPS_PRUNER_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "lindeps/errors.hpp"
#include "lindeps/inference.hpp"
#include "lindeps/linalg.hpp"
#include "lindeps/metrics.hpp"
#include "lindeps/model.hpp"
#include "lindeps/tensor.hpp"

namespace lindeps {

/// Threshold that removes only numerically exact dependencies.
inline constexpr double kLosslessTau = 1e-6;

struct PruneConfig {
  double tau = kLosslessTau;
  std::size_t min_channels_kept = 1;
  /// Conv layer indices to prune; nullopt selects every prunable layer.
  std::optional<std::vector<std::size_t>> layers;

  void check() const {
    if (!(tau >= 0.0 && tau < 1.0)) {
      throw Error(ErrorKind::usage, "tau must lie in [0,1), got " + std::to_string(tau));
    }
    if (min_channels_kept < 1) throw Error(ErrorKind::usage, "min_channels_kept must be at least 1");
  }
};

/// Where a conv layer's output is consumed.
struct ConsumerPath {
  std::size_t producer = 0;
  std::size_t consumer = 0;
  std::vector<std::size_t> batchnorms;  // BN layers between producer and consumer
  bool dense = false;                   // consumer is Dense behind a Flatten
  ActShape tap_shape;                   // C×H×W of the consumer input before flattening
};

/// Finds the Conv2D/Dense layer that ingests layer `producer`'s output.
/// Only BatchNorm, activation, pooling and Flatten may sit in between.
inline std::optional<ConsumerPath> find_consumer(const Model& model, std::size_t producer) {
  if (producer >= model.layers.size() || !std::holds_alternative<Conv2D>(model.layers[producer])) {
    return std::nullopt;
  }
  const auto trace = validate(model);
  ConsumerPath path;
  path.producer = producer;
  path.tap_shape = trace[producer + 1];
  for (std::size_t i = producer + 1; i < model.layers.size(); ++i) {
    const auto& layer = model.layers[i];
    if (std::holds_alternative<Conv2D>(layer)) {
      path.consumer = i;
      path.tap_shape = trace[i];
      return path;
    }
    if (std::holds_alternative<Dense>(layer)) {
      if (!path.dense) return std::nullopt;
      path.consumer = i;
      return path;
    }
    if (std::holds_alternative<BatchNorm>(layer)) {
      path.batchnorms.push_back(i);
    } else if (std::holds_alternative<Flatten>(layer)) {
      path.dense = true;
      path.tap_shape = trace[i];
    }
  }
  return std::nullopt;
}

/// Conv layers whose output feeds another Conv2D or Dense layer.
inline std::vector<std::size_t> prunable_layers(const Model& model) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (find_consumer(model, i)) out.push_back(i);
  }
  return out;
}

enum class SampleCheck { require_overdetermined, none };

/// Flattens a B×C×H×W capture into a C×(B·H·W) matrix. Row j holds channel
/// j in (image, row, column) order. By default B·H·W must exceed C.
inline Tensor aggregate(const Tensor32& capture, SampleCheck check = SampleCheck::require_overdetermined) {
  if (capture.rank() != 4) throw ShapeError("aggregate expects a B×C×H×W capture, got " + shape_string(capture.shape()));
  const std::size_t batch = capture.dim(0), channels = capture.dim(1);
  const std::size_t plane = capture.dim(2) * capture.dim(3);
  const std::size_t samples = batch * plane;
  if (check == SampleCheck::require_overdetermined && samples <= channels) {
    throw NumericalError("aggregation needs B*H*W > C, got B*H*W = " + std::to_string(samples) +
                         " and C = " + std::to_string(channels));
  }
  Tensor a({channels, samples});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const float* src = capture.data().data() + (b * channels + c) * plane;
      double* dst = &a(c, b * plane);
      for (std::size_t s = 0; s < plane; ++s) dst[s] = src[s];
    }
  }
  return a;
}

/// Dense pathway: a B×I capture taken after a channel-major Flatten of a
/// C×H×W tensor.
inline Tensor aggregate(const Tensor32& flat_capture, const ActShape& unflattened,
                        SampleCheck check = SampleCheck::require_overdetermined) {
  if (flat_capture.rank() != 2 || flat_capture.dim(1) != unflattened.volume()) {
    throw ShapeError("dense capture " + shape_string(flat_capture.shape()) + " does not unflatten to " +
                     to_string(unflattened));
  }
  return aggregate(flat_capture.reshaped(
      {flat_capture.dim(0), unflattened.channels, unflattened.height, unflattened.width}), check);
}

struct ChannelSelection {
  std::vector<std::size_t> kept;  // original channel indices, ascending
  PqrFactorization factorization;  // of Aᵀ, Q omitted
  std::size_t rank = 0;            // effective rank before the min-channels floor
};

/// Keeps the leading pivots of the pivoted QR of Aᵀ whose diagonal passes
/// the relative threshold, never fewer than `min_kept`.
inline ChannelSelection select_channels(const Tensor& a, double tau, std::size_t min_kept = 1) {
  if (a.rank() != 2) throw ShapeError("select_channels expects a C×N matrix");
  if (a.cols() <= a.rows()) {
    throw NumericalError("select_channels needs N > C, got C = " + std::to_string(a.rows()) +
                         ", N = " + std::to_string(a.cols()));
  }
  ChannelSelection sel;
  sel.factorization = pqr_decompose_transposed(a, QForm::omit);
  sel.rank = effective_rank(sel.factorization, tau);
  const std::size_t keep = std::min(a.rows(), std::max(sel.rank, min_kept));
  sel.kept.assign(sel.factorization.perm.begin(), sel.factorization.perm.begin() + static_cast<std::ptrdiff_t>(keep));
  std::sort(sel.kept.begin(), sel.kept.end());
  return sel;
}

/// Least-squares L with L·A′ ≈ A, where A′ holds the kept rows of A. Rows
/// of L at kept indices are set to the exact unit pattern.
inline Tensor compute_recovery(const Tensor& a, std::span<const std::size_t> kept) {
  const Tensor aprime = select_rows(a, kept);
  Tensor l = least_squares(aprime, a);
  for (std::size_t j = 0; j < kept.size(); ++j) {
    auto row = l.row(kept[j]);
    std::fill(row.begin(), row.end(), 0.0);
    row[j] = 1.0;
  }
  return l;
}

/// ‖L·A′ − A‖_F / ‖A‖_F.
inline double recovery_residual(const Tensor& a, std::span<const std::size_t> kept, const Tensor& l) {
  const Tensor recon = matmul(l, select_rows(a, kept));
  double err = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) err += (recon[i] - a[i]) * (recon[i] - a[i]);
  const double norm = frobenius_norm(a);
  return norm > 0.0 ? std::sqrt(err) / norm : 0.0;
}

/// Rewrites a C-input conv so that it consumes the C′ kept channels:
/// each p×p kernel slice is treated as a p²×C matrix and right-multiplied
/// by L.
inline Conv2D adapt_conv_consumer(const Conv2D& consumer, const Tensor& l) {
  const std::size_t cin = consumer.in_channels();
  if (l.rank() != 2 || l.rows() != cin) {
    throw ShapeError("recovery matrix " + shape_string(l.shape()) + " does not match consumer input channels " +
                     std::to_string(cin));
  }
  const std::size_t cout = consumer.out_channels(), kept = l.cols();
  const std::size_t area = consumer.kernel() * consumer.kernel();
  Conv2D out = consumer;
  out.weights = Tensor32({cout, kept, consumer.kernel(), consumer.kernel()});
  const float* w = consumer.weights.data().data();
  float* nw = out.weights.data().data();
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t s = 0; s < area; ++s) {
      for (std::size_t j = 0; j < kept; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cin; ++c) acc += static_cast<double>(w[(o * cin + c) * area + s]) * l(c, j);
        nw[(o * kept + j) * area + s] = static_cast<float>(acc);
      }
    }
  }
  return out;
}

/// Dense counterpart: weights viewed as O×C×(H·W), contracted with L over C.
inline Dense adapt_dense_consumer(const Dense& consumer, const Tensor& l, std::size_t height, std::size_t width) {
  const std::size_t in = consumer.in_features(), plane = height * width;
  if (plane == 0 || in % plane != 0) {
    throw ShapeError("dense input " + std::to_string(in) + " is not divisible by H*W = " + std::to_string(plane));
  }
  const std::size_t channels = in / plane;
  if (l.rank() != 2 || l.rows() != channels) {
    throw ShapeError("recovery matrix " + shape_string(l.shape()) + " does not match " + std::to_string(channels) +
                     " input channels");
  }
  const std::size_t outf = consumer.out_features(), kept = l.cols();
  Dense out = consumer;
  out.weights = Tensor32({outf, kept * plane});
  for (std::size_t o = 0; o < outf; ++o) {
    const float* w = consumer.weights.data().data() + o * in;
    float* nw = out.weights.data().data() + o * kept * plane;
    for (std::size_t j = 0; j < kept; ++j) {
      for (std::size_t s = 0; s < plane; ++s) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) acc += static_cast<double>(w[c * plane + s]) * l(c, j);
        nw[j * plane + s] = static_cast<float>(acc);
      }
    }
  }
  return out;
}

namespace detail {

inline Tensor32 take_leading(const Tensor32& t, std::span<const std::size_t> keep) {
  const std::size_t stride = t.size() / t.dim(0);
  Shape shape = t.shape();
  shape[0] = keep.size();
  Tensor32 out(shape);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(keep[i] * stride), stride,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return out;
}

inline BatchNorm take_channels(const BatchNorm& bn, std::span<const std::size_t> keep) {
  return BatchNorm{take_leading(bn.gamma, keep), take_leading(bn.beta, keep), take_leading(bn.running_mean, keep),
                   take_leading(bn.running_var, keep), bn.epsilon};
}

}  // namespace detail

enum class PruneStatus { pruned, unchanged, skipped, failed };

inline const char* to_string(PruneStatus s) {
  switch (s) {
    case PruneStatus::pruned: return "pruned";
    case PruneStatus::unchanged: return "unchanged";
    case PruneStatus::skipped: return "skipped";
    case PruneStatus::failed: return "failed";
  }
  return "unknown";
}

struct LayerPruneRecord {
  std::size_t layer_index = 0;
  std::size_t consumer_index = 0;
  PruneStatus status = PruneStatus::unchanged;
  std::string message;
  std::size_t channels_before = 0;
  std::size_t channels_after = 0;
  std::size_t effective_rank = 0;
  std::vector<std::size_t> kept_indices;
  std::vector<std::size_t> removed_indices;
  std::vector<double> diag_magnitudes;  // pivot order, non-increasing
  double recovery_residual = 0.0;
  /// sqrt(C − C′)·|d_C′| / ‖A‖_F plus 1e-8 slack: the largest column left
  /// after C′ pivots bounds every residual column.
  double residual_bound = 0.0;
  std::uint64_t flops_before = 0;
  std::uint64_t flops_after = 0;
  std::uint64_t params_before = 0;
  std::uint64_t params_after = 0;
};

struct LayerPruneResult {
  Model model;
  LayerPruneRecord record;
};

/// Prunes the output channels of conv layer `layer_index` and adapts its
/// consumer. Structural violations leave the model untouched and report
/// status `skipped`; numerical failures throw.
inline LayerPruneResult prune_layer(const Model& model, std::size_t layer_index, const CalibrationBatch& batch,
                                    const PruneConfig& config) {
  config.check();
  validate_classifier(model);
  LayerPruneResult result{model, {}};
  auto& rec = result.record;
  rec.layer_index = layer_index;
  const auto costs_before = count_costs(model);
  rec.flops_before = rec.flops_after = costs_before.total_flops();
  rec.params_before = rec.params_after = costs_before.total_params;

  const auto path = find_consumer(model, layer_index);
  if (!path) {
    rec.status = PruneStatus::skipped;
    rec.message = "layer " + std::to_string(layer_index) +
                  " is not a Conv2D whose output feeds a Conv2D or Dense layer";
    return result;
  }
  rec.consumer_index = path->consumer;
  const auto& producer = std::get<Conv2D>(model.layers[layer_index]);
  const std::size_t channels = producer.out_channels();
  rec.channels_before = rec.channels_after = channels;

  const std::size_t tap = path->consumer;
  const auto trace = forward_with_taps(model, batch.images, std::span<const std::size_t>(&tap, 1));
  const Tensor32& capture = trace.captures.at(tap);
  const Tensor a = path->dense ? aggregate(capture, path->tap_shape) : aggregate(capture);

  auto selection = select_channels(a, config.tau, config.min_channels_kept);
  rec.effective_rank = selection.rank;
  rec.diag_magnitudes.reserve(selection.factorization.diag.size());
  for (double d : selection.factorization.diag) rec.diag_magnitudes.push_back(std::abs(d));
  rec.kept_indices = selection.kept;
  for (std::size_t c = 0, k = 0; c < channels; ++c) {
    if (k < rec.kept_indices.size() && rec.kept_indices[k] == c) {
      ++k;
    } else {
      rec.removed_indices.push_back(c);
    }
  }
  rec.channels_after = rec.kept_indices.size();
  rec.residual_bound = 1e-8;
  if (rec.channels_after == channels) {
    rec.status = PruneStatus::unchanged;
    return result;
  }

  const Tensor l = compute_recovery(a, rec.kept_indices);
  rec.recovery_residual = recovery_residual(a, rec.kept_indices, l);
  const double anorm = frobenius_norm(a);
  if (anorm > 0.0) {
    rec.residual_bound += std::sqrt(static_cast<double>(channels - rec.channels_after)) *
                          rec.diag_magnitudes[rec.channels_after] / anorm;
  }

  auto& layers = result.model.layers;
  auto& conv = std::get<Conv2D>(layers[layer_index]);
  conv.weights = detail::take_leading(conv.weights, rec.kept_indices);
  if (conv.bias) conv.bias = detail::take_leading(*conv.bias, rec.kept_indices);
  for (std::size_t bn : path->batchnorms) {
    layers[bn] = detail::take_channels(std::get<BatchNorm>(layers[bn]), rec.kept_indices);
  }
  if (path->dense) {
    layers[tap] = adapt_dense_consumer(std::get<Dense>(layers[tap]), l, path->tap_shape.height, path->tap_shape.width);
  } else {
    layers[tap] = adapt_conv_consumer(std::get<Conv2D>(layers[tap]), l);
  }
  validate_classifier(result.model);

  const auto costs_after = count_costs(result.model);
  rec.flops_after = costs_after.total_flops();
  rec.params_after = costs_after.total_params;
  rec.status = PruneStatus::pruned;
  return result;
}

struct PruneReport {
  std::vector<LayerPruneRecord> records;
  CostBreakdown costs_before;
  CostBreakdown costs_after;
  ReductionRatios ratios;
  PruneConfig config;
  std::string timestamp;  // ISO-8601 UTC
  double duration_seconds = 0.0;

  std::size_t channels_removed() const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.channels_before - r.channels_after;
    return n;
  }
};

struct PruneOutcome {
  Model model;
  PruneReport report;
};

inline std::string iso8601_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buf;
}

/// Prunes the selected conv layers in order. Each layer is captured from
/// the model as already pruned by the preceding steps. A layer that fails
/// is recorded and skipped.
inline PruneOutcome prune_model(const Model& model, const CalibrationBatch& batch, const PruneConfig& config) {
  config.check();
  validate_classifier(model);
  const auto start = std::chrono::steady_clock::now();

  PruneOutcome out{model, {}};
  auto& report = out.report;
  report.config = config;
  report.timestamp = iso8601_now();
  report.costs_before = count_costs(model);

  std::vector<std::size_t> targets = config.layers ? *config.layers : prunable_layers(model);
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());

  for (std::size_t index : targets) {
    try {
      auto step = prune_layer(out.model, index, batch, config);
      out.model = std::move(step.model);
      report.records.push_back(std::move(step.record));
    } catch (const Error& e) {
      LayerPruneRecord failed;
      failed.layer_index = index;
      failed.status = PruneStatus::failed;
      failed.message = e.what();
      if (index < out.model.layers.size()) {
        if (const auto* conv = std::get_if<Conv2D>(&out.model.layers[index])) {
          failed.channels_before = failed.channels_after = conv->out_channels();
        }
      }
      const auto costs = count_costs(out.model);
      failed.flops_before = failed.flops_after = costs.total_flops();
      failed.params_before = failed.params_after = costs.total_params;
      report.records.push_back(std::move(failed));
    }
  }

  validate_classifier(out.model);
  report.costs_after = count_costs(out.model);
  report.ratios = reduction_ratios(report.costs_before, report.costs_after);
  report.duration_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

/// Per-layer check of B·H·W > C for every selected prunable layer.
struct CalibrationCheck {
  std::size_t layer_index = 0;
  std::size_t samples = 0;   // B·H·W at the consumer input
  std::size_t channels = 0;  // C
  bool ok() const { return samples > channels; }
};

inline std::vector<CalibrationCheck> check_calibration(const Model& model, std::size_t batch_size,
                                                       std::span<const std::size_t> layers) {
  std::vector<CalibrationCheck> out;
  for (std::size_t index : layers) {
    const auto path = find_consumer(model, index);
    if (!path) continue;
    out.push_back({index, batch_size * path->tap_shape.height * path->tap_shape.width, path->tap_shape.channels});
  }
  return out;
}

inline nlohmann::json to_json(const LayerPruneRecord& r) {
  return {{"layer_index", r.layer_index},
          {"consumer_index", r.consumer_index},
          {"status", to_string(r.status)},
          {"message", r.message},
          {"channels_before", r.channels_before},
          {"channels_after", r.channels_after},
          {"effective_rank", r.effective_rank},
          {"kept_indices", r.kept_indices},
          {"removed_indices", r.removed_indices},
          {"diag_magnitudes", r.diag_magnitudes},
          {"recovery_residual", r.recovery_residual},
          {"residual_bound", r.residual_bound},
          {"flops_before", r.flops_before},
          {"flops_after", r.flops_after},
          {"params_before", r.params_before},
          {"params_after", r.params_after}};
}

inline nlohmann::json to_json(const PruneReport& report) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : report.records) records.push_back(to_json(r));
  nlohmann::json config{{"tau", report.config.tau}, {"min_channels_kept", report.config.min_channels_kept}};
  config["layers"] = report.config.layers ? nlohmann::json(*report.config.layers) : nlohmann::json("all");
  return {{"records", records},
          {"ratios", to_json(report.ratios)},
          {"costs_before", to_json(report.costs_before)},
          {"costs_after", to_json(report.costs_after)},
          {"config", config},
          {"channels_removed", report.channels_removed()},
          {"timestamp", report.timestamp},
          {"duration_seconds", report.duration_seconds}};
}

}  // namespace lindeps

#endif  // LINDEPS_PRUNER_HPP
