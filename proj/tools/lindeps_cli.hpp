#ifndef LINDEPS_TOOLS_CLI_HPP
#define LINDEPS_TOOLS_CLI_HPP

// Command-line front end: prune, eval, info, bench.
// Exit codes: 0 ok, 2 usage, 3 I/O, 4 validation, 5 numerical.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "lindeps/errors.hpp"
#include "lindeps/inference.hpp"
#include "lindeps/io.hpp"
#include "lindeps/metrics.hpp"
#include "lindeps/model.hpp"
#include "lindeps/pruner.hpp"
#include "lindeps/synthetic.hpp"

namespace lindeps::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;

namespace detail {

inline std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

inline void require_file(const std::string& path, const char* what) {
  if (!std::filesystem::is_regular_file(path)) throw IoError(std::string(what) + " file not found: " + path);
}

inline Model read_model(const std::string& path) {
  require_file(path, "model");
  return load_model(path);
}

inline CalibrationBatch read_batch(const std::string& path, const char* what) {
  require_file(path, what);
  return load_batch(path);
}

inline void print_cost_table(std::ostream& out, const Model& model, const CostBreakdown& costs) {
  const auto [c, h, w] = model.input_shape;
  out << "input (" << c << ',' << h << ',' << w << "), " << model.layers.size() << " layers\n";
  out << std::left << std::setw(6) << "index" << std::setw(11) << "layer" << std::setw(16) << "output"
      << std::right << std::setw(12) << "params" << std::setw(14) << "MACs" << '\n';
  for (const auto& l : costs.layers) {
    out << std::left << std::setw(6) << l.index << std::setw(11) << l.kind << std::setw(16) << to_string(l.output)
        << std::right << std::setw(12) << l.params << std::setw(14) << l.macs << '\n';
  }
  if (!costs.layers.empty()) {
    out << std::left << std::setw(33) << "total" << std::right << std::setw(12) << costs.total_params
        << std::setw(14) << costs.total_macs << '\n';
    out << "FLOPs (1 MAC = 2 FLOPs): " << costs.total_flops() << '\n';
  }
}

inline void check_batch_shape(const Model& model, const CalibrationBatch& batch, const char* what) {
  const auto [c, h, w] = model.input_shape;
  if (batch.images.dim(1) != c || batch.images.dim(2) != h || batch.images.dim(3) != w) {
    throw ShapeError(std::string(what) + " shape " + shape_string(batch.images.shape()) +
                     " does not match model input (" + std::to_string(c) + "," + std::to_string(h) + "," +
                     std::to_string(w) + ")");
  }
}

struct PruneArgs {
  std::string model, calib, out, report;
  double tau = kLosslessTau;
  std::size_t min_channels = 1;
  std::vector<std::size_t> layers;
  std::uint64_t seed = 0;
};

inline int run_prune(const PruneArgs& args, std::ostream& out, std::ostream& err) {
  PruneConfig config;
  config.tau = args.tau;
  config.min_channels_kept = args.min_channels;
  if (!args.layers.empty()) config.layers = args.layers;
  config.check();

  const Model model = read_model(args.model);
  const CalibrationBatch batch = read_batch(args.calib, "calibration");
  validate_classifier(model);
  check_batch_shape(model, batch, "calibration batch");

  const auto targets = config.layers ? *config.layers : prunable_layers(model);
  for (std::size_t index : targets) {
    if (!find_consumer(model, index)) {
      throw ShapeError("layer " + std::to_string(index) + " is not a prunable Conv2D");
    }
  }
  bool calibration_ok = true;
  for (const auto& check : check_calibration(model, batch.size(), targets)) {
    if (!check.ok()) {
      err << "layer " << check.layer_index << ": B*H*W = " << check.samples << " must exceed C = " << check.channels
          << '\n';
      calibration_ok = false;
    }
  }
  if (!calibration_ok) throw ShapeError("calibration batch too small for the selected layers");

  auto outcome = prune_model(model, batch, config);
  const double drift = max_abs_diff(forward(model, batch.images), forward(outcome.model, batch.images));

  out << "layer  consumer  status     before  after  residual\n";
  bool any_failed = false;
  for (const auto& r : outcome.report.records) {
    out << std::left << std::setw(7) << r.layer_index << std::setw(10) << r.consumer_index << std::setw(11)
        << to_string(r.status) << std::right << std::setw(6) << r.channels_before << std::setw(7)
        << r.channels_after << "  " << std::scientific << std::setprecision(3) << r.recovery_residual
        << std::defaultfloat << '\n';
    if (r.status == PruneStatus::failed) {
      err << "layer " << r.layer_index << " failed: " << r.message << '\n';
      any_failed = true;
    }
  }
  out << "channels removed: " << outcome.report.channels_removed() << '\n';
  out << "FLOPs reduction: " << fixed(outcome.report.ratios.flops_percent, 2) << "%\n";
  out << "params reduction: " << fixed(outcome.report.ratios.params_percent, 2) << "%\n";
  out << "calibration logit drift (max abs): " << std::scientific << std::setprecision(3) << drift
      << std::defaultfloat << '\n';

  if (!args.out.empty()) save_model(outcome.model, args.out);
  if (!args.report.empty()) {
    auto doc = to_json(outcome.report);
    doc["calibration_logit_drift"] = drift;
    doc["seed"] = args.seed;
    doc["model"] = args.model;
    doc["calibration"] = args.calib;
    std::ofstream f(args.report);
    if (!f) throw IoError("cannot open " + args.report + " for writing");
    f << doc.dump(2) << '\n';
    if (!f) throw IoError("error writing " + args.report);
  }
  return any_failed ? static_cast<int>(ErrorKind::numerical) : kExitOk;
}

struct EvalArgs {
  std::string model, data, baseline;
};

inline int run_eval(const EvalArgs& args, std::ostream& out) {
  const Model model = read_model(args.model);
  const CalibrationBatch data = read_batch(args.data, "dataset");
  if (!data.labels) throw ShapeError("dataset " + args.data + " has no labels; eval requires labelled data");
  check_batch_shape(model, data, "dataset");
  const double acc = evaluate_top1(model, data);
  const auto costs = count_costs(model);
  out << "top-1 accuracy: " << fixed(100.0 * acc, 2) << "% (" << data.size() << " samples)\n";
  print_cost_table(out, model, costs);
  if (!args.baseline.empty()) {
    const Model base = read_model(args.baseline);
    check_batch_shape(base, data, "dataset");
    const double base_acc = evaluate_top1(base, data);
    const auto base_costs = count_costs(base);
    const auto ratios = reduction_ratios(base_costs, costs);
    out << "baseline top-1 accuracy: " << fixed(100.0 * base_acc, 2) << "%\n";
    out << "accuracy delta: " << fixed(100.0 * (acc - base_acc), 2) << " pp\n";
    out << "baseline MACs: " << base_costs.total_macs << ", model MACs: " << costs.total_macs << '\n';
    out << "FLOPs reduction: " << fixed(ratios.flops_percent, 2) << "%, params reduction: "
        << fixed(ratios.params_percent, 2) << "%\n";
  }
  return kExitOk;
}

inline int run_info(const std::string& path, std::ostream& out) {
  const Model model = read_model(path);
  out << "model: " << path << '\n';
  for (const auto& [k, v] : model.metadata) out << "  " << k << ": " << v << '\n';
  print_cost_table(out, model, count_costs(model));
  return kExitOk;
}

struct BenchArgs {
  std::vector<std::string> models;
  std::string data;
  std::size_t reps = 10;
  std::size_t batch = 1;
  std::uint64_t seed = 0;
};

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Timing {
  double median_ms = 0.0;
  double mad_ms = 0.0;  // median absolute deviation
};

inline Timing summarize(std::vector<double> samples) {
  Timing t;
  t.median_ms = median(samples);
  for (auto& s : samples) s = std::abs(s - t.median_ms);
  t.mad_ms = median(samples);
  return t;
}

// Repetitions alternate between models so slow drift in machine state
// affects each one alike.
inline std::vector<Timing> time_forward(const std::vector<Model>& models, const Tensor32& images, std::size_t reps) {
  for (const auto& m : models)
    for (int i = 0; i < 3; ++i) forward(m, images);
  std::vector<std::vector<double>> samples(models.size());
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t i = 0; i < models.size(); ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      forward(models[i], images);
      samples[i].push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
  }
  std::vector<Timing> out;
  for (auto& s : samples) out.push_back(summarize(std::move(s)));
  return out;
}

inline int run_bench(const BenchArgs& args, std::ostream& out) {
  if (args.reps == 0) throw Error(ErrorKind::usage, "--reps must be at least 1");
  if (args.models.empty() || args.models.size() > 2) throw Error(ErrorKind::usage, "bench takes one or two --model");
  std::vector<Model> models;
  for (const auto& p : args.models) models.push_back(read_model(p));
  for (const auto& m : models) validate_classifier(m);

  Tensor32 images;
  if (!args.data.empty()) {
    images = read_batch(args.data, "dataset").images;
  } else {
    synthetic::Rng rng(args.seed);
    images = synthetic::random_batch(args.batch, models.front().input_shape, rng).images;
  }
  const CalibrationBatch probe{images, std::nullopt, std::nullopt};
  for (const auto& m : models) check_batch_shape(m, probe, "bench input");
  const auto timings = time_forward(models, images, args.reps);
  for (std::size_t i = 0; i < models.size(); ++i) {
    out << args.models[i] << ": median " << fixed(timings[i].median_ms, 3) << " ms over " << args.reps
        << " runs (MAD " << fixed(timings[i].mad_ms, 3) << " ms)\n";
  }
  if (timings.size() == 2) {
    const double rel = 100.0 * (timings[1].median_ms / timings[0].median_ms - 1.0);
    const double noise = 100.0 * std::max(timings[0].mad_ms / timings[0].median_ms,
                                          timings[1].mad_ms / timings[1].median_ms);
    out << "relative latency: " << (rel >= 0 ? "+" : "") << fixed(rel, 2) << "% (noise floor " << fixed(noise, 2)
        << "%)\n";
  }
  return kExitOk;
}

}  // namespace detail

/// Runs the CLI with argv-style arguments and returns the exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Prune linearly dependent channels from CNNs via pivoted QR", "lindeps"};
  app.require_subcommand(1);

  detail::PruneArgs prune;
  auto* prune_cmd = app.add_subcommand("prune", "prune dependent channels and adapt consumers");
  prune_cmd->add_option("--model", prune.model, "input model (.lndp)")->required();
  prune_cmd->add_option("--calib", prune.calib, "calibration batch (.lnds)")->required();
  prune_cmd->add_option("--tau", prune.tau, "relative pruning threshold in [0,1)");
  prune_cmd->add_option("--min-channels", prune.min_channels, "channels always kept per layer");
  prune_cmd->add_option("--out", prune.out, "pruned model output (.lndp)")->required();
  prune_cmd->add_option("--report", prune.report, "JSON report output");
  prune_cmd->add_option("--layers", prune.layers, "conv layer indices to prune, comma-separated (default: all prunable)")
      ->delimiter(',');
  prune_cmd->add_option("--seed", prune.seed, "seed echoed into the report");

  detail::EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "top-1 accuracy and cost breakdown");
  eval_cmd->add_option("--model", eval.model, "model (.lndp)")->required();
  eval_cmd->add_option("--data", eval.data, "labelled dataset (.lnds)")->required();
  eval_cmd->add_option("--baseline", eval.baseline, "reference model for accuracy and cost deltas");

  std::string info_model;
  auto* info_cmd = app.add_subcommand("info", "per-layer shapes, parameters and MACs");
  info_cmd->add_option("--model", info_model, "model (.lndp)")->required();

  detail::BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "median forward latency");
  bench_cmd->add_option("--model", bench.models, "model (.lndp); give twice for a relative comparison")
      ->required()
      ->expected(1, 2);
  bench_cmd->add_option("--data", bench.data, "input batch (.lnds); random if omitted");
  bench_cmd->add_option("--reps", bench.reps, "timed repetitions after 3 warm-up runs");
  bench_cmd->add_option("--batch", bench.batch, "random batch size when --data is omitted");
  bench_cmd->add_option("--seed", bench.seed, "seed for the random batch");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::usage);
  }

  try {
    if (*prune_cmd) return detail::run_prune(prune, out, err);
    if (*eval_cmd) return detail::run_eval(eval, out);
    if (*info_cmd) return detail::run_info(info_model, out);
    if (*bench_cmd) return detail::run_bench(bench, out);
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return static_cast<int>(ErrorKind::usage);
}

}  // namespace lindeps::cli

#endif  // LINDEPS_TOOLS_CLI_HPP
