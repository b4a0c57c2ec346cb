#ifndef LINDEPS_METRICS_HPP
#define LINDEPS_METRICS_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "lindeps/errors.hpp"
#include "lindeps/inference.hpp"
#include "lindeps/model.hpp"

namespace lindeps {

/// One multiply-accumulate is reported as this many FLOPs.
inline constexpr std::uint64_t kFlopsPerMac = 2;

struct LayerCost {
  std::size_t index = 0;
  std::string kind;
  ActShape output;
  std::uint64_t macs = 0;
  std::uint64_t params = 0;         // trainable: weights, biases, BN gamma/beta
  std::uint64_t stored_params = 0;  // everything serialized, BN running stats included
};

struct CostBreakdown {
  std::vector<LayerCost> layers;
  std::uint64_t total_macs = 0;
  std::uint64_t total_params = 0;
  std::uint64_t total_stored_params = 0;

  std::uint64_t total_flops() const { return total_macs * kFlopsPerMac; }
};

/// MACs and parameter counts per layer. Pool, activation, flatten and
/// BatchNorm contribute no MACs.
inline CostBreakdown count_costs(const Model& model) {
  const auto trace = validate(model);
  CostBreakdown costs;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    LayerCost entry;
    entry.index = i;
    entry.kind = layer_name(model.layers[i]);
    entry.output = trace[i + 1];
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Conv2D>) {
            const std::uint64_t k = l.kernel();
            entry.macs = l.out_channels() * l.in_channels() * k * k * entry.output.height * entry.output.width;
            entry.params = l.weights.size() + (l.bias ? l.bias->size() : 0);
            entry.stored_params = entry.params;
          } else if constexpr (std::is_same_v<L, BatchNorm>) {
            entry.params = 2 * l.channels();
            entry.stored_params = 4 * l.channels();
          } else if constexpr (std::is_same_v<L, Dense>) {
            entry.macs = static_cast<std::uint64_t>(l.out_features()) * l.in_features();
            entry.params = l.weights.size() + (l.bias ? l.bias->size() : 0);
            entry.stored_params = entry.params;
          }
        },
        model.layers[i]);
    costs.total_macs += entry.macs;
    costs.total_params += entry.params;
    costs.total_stored_params += entry.stored_params;
    costs.layers.push_back(std::move(entry));
  }
  return costs;
}

/// Reduction scores, 1 − after/before. The *_percent fields are rounded to
/// two decimals; the *_fraction fields keep full precision.
struct ReductionRatios {
  double flops_fraction = 0.0;
  double params_fraction = 0.0;
  double flops_percent = 0.0;
  double params_percent = 0.0;

  friend bool operator==(const ReductionRatios&, const ReductionRatios&) = default;
};

inline double percent_2dp(double fraction) { return std::round(fraction * 10000.0) / 100.0; }

inline ReductionRatios reduction_ratios(const CostBreakdown& before, const CostBreakdown& after) {
  if (before.total_macs == 0 || before.total_params == 0) {
    throw Error(ErrorKind::validation, "reduction ratios need a non-zero baseline");
  }
  ReductionRatios r;
  r.flops_fraction = 1.0 - static_cast<double>(after.total_macs) / static_cast<double>(before.total_macs);
  r.params_fraction = 1.0 - static_cast<double>(after.total_params) / static_cast<double>(before.total_params);
  r.flops_percent = percent_2dp(r.flops_fraction);
  r.params_percent = percent_2dp(r.params_fraction);
  return r;
}

/// Row-wise argmax; ties go to the lowest class index.
inline std::vector<std::size_t> argmax_rows(const Tensor32& logits) {
  std::vector<std::size_t> out(logits.dim(0));
  for (std::size_t b = 0; b < out.size(); ++b) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.dim(1); ++c) {
      if (logits(b, c) > logits(b, best)) best = c;
    }
    out[b] = best;
  }
  return out;
}

/// Fraction of labels predicted by top-1 over all batches.
inline double evaluate_top1(const Model& model, std::span<const CalibrationBatch> batches) {
  std::size_t correct = 0, total = 0;
  for (const auto& batch : batches) {
    if (!batch.labels) throw Error(ErrorKind::validation, "top-1 evaluation requires labelled data");
    validate(batch);
    const auto predicted = argmax_rows(forward(model, batch.images));
    for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == (*batch.labels)[i];
    total += predicted.size();
  }
  if (total == 0) throw Error(ErrorKind::validation, "top-1 evaluation requires at least one sample");
  return static_cast<double>(correct) / static_cast<double>(total);
}

inline double evaluate_top1(const Model& model, const CalibrationBatch& batch) {
  return evaluate_top1(model, std::span<const CalibrationBatch>(&batch, 1));
}

inline nlohmann::json to_json(const CostBreakdown& costs) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : costs.layers) {
    layers.push_back({{"index", l.index},
                      {"kind", l.kind},
                      {"output_shape", l.output.dims()},
                      {"macs", l.macs},
                      {"params", l.params},
                      {"stored_params", l.stored_params}});
  }
  return {{"layers", layers},
          {"total_macs", costs.total_macs},
          {"total_flops", costs.total_flops()},
          {"total_params", costs.total_params},
          {"total_stored_params", costs.total_stored_params},
          {"convention", "1 MAC = 2 FLOPs"}};
}

inline nlohmann::json to_json(const ReductionRatios& r) {
  return {{"flops_reduction_pct", r.flops_percent},
          {"params_reduction_pct", r.params_percent},
          {"flops_reduction_fraction", r.flops_fraction},
          {"params_reduction_fraction", r.params_fraction}};
}

}  // namespace lindeps

#endif  // LINDEPS_METRICS_HPP
