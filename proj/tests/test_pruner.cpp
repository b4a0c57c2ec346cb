#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "lindeps/metrics.hpp"
#include "lindeps/pruner.hpp"
#include "lindeps/synthetic.hpp"
#include "oracles.hpp"

using namespace lindeps;

namespace {

// conv(3→5) whose filter 4 is Σ αᵢ·filterᵢ (bias included), feeding a conv
// directly with no activation in between.
Model linear_combo_net(std::uint64_t seed) {
  synthetic::Rng rng(seed);
  Model m;
  m.input_shape = {3, 8, 8};
  auto conv = synthetic::random_conv(3, 5, 3, rng, 1, 1);
  const double alpha[] = {0.7, -1.3, 0.4, 2.0};
  const std::size_t stride = conv.weights.size() / 5;
  for (std::size_t s = 0; s < stride; ++s) {
    double acc = 0.0;
    for (std::size_t i = 0; i < 4; ++i) acc += alpha[i] * conv.weights[i * stride + s];
    conv.weights[4 * stride + s] = static_cast<float>(acc);
  }
  double bias = 0.0;
  for (std::size_t i = 0; i < 4; ++i) bias += alpha[i] * (*conv.bias)[i];
  (*conv.bias)[4] = static_cast<float>(bias);
  m.layers.emplace_back(std::move(conv));
  m.layers.emplace_back(synthetic::random_conv(5, 6, 3, rng, 1, 1));
  m.layers.emplace_back(Activation{});
  m.layers.emplace_back(Flatten{});
  m.layers.emplace_back(synthetic::random_dense(6 * 8 * 8, 4, rng));
  return m;
}

CalibrationBatch batch_for(const Model& m, std::size_t n, std::uint64_t seed) {
  synthetic::Rng rng(seed);
  return synthetic::random_batch(n, m.input_shape, rng);
}

double logit_drift(const Model& a, const Model& b, const CalibrationBatch& batch) {
  return max_abs_diff(forward(a, batch.images), forward(b, batch.images));
}

std::size_t conv_channels(const Model& m, std::size_t index) {
  return std::get<Conv2D>(m.layers[index]).out_channels();
}

}  // namespace

TEST(Aggregate, DegenerateFlatten) {
  const Tensor32 capture({1, 2, 1, 1}, std::vector<float>{3.5f, -2.0f});
  const Tensor a = aggregate(capture, SampleCheck::none);
  EXPECT_EQ(a, Tensor::matrix({{3.5}, {-2.0}}));
  EXPECT_THROW(aggregate(capture), NumericalError);
}

TEST(Aggregate, ImageThenRowThenColumnOrder) {
  // B=2, C=1, H=1, W=2 → [x000, x001, x100, x101]
  const Tensor32 capture({2, 1, 1, 2}, std::vector<float>{1, 2, 3, 4});
  EXPECT_EQ(aggregate(capture), Tensor::matrix({{1, 2, 3, 4}}));
}

TEST(Aggregate, ChannelRowsInterleaveAcrossImages) {
  Tensor32 capture({2, 2, 1, 2});
  std::iota(capture.storage().begin(), capture.storage().end(), 0.0f);
  // image 0: ch0 = {0,1}, ch1 = {2,3}; image 1: ch0 = {4,5}, ch1 = {6,7}
  EXPECT_EQ(aggregate(capture), Tensor::matrix({{0, 1, 4, 5}, {2, 3, 6, 7}}));
}

TEST(Aggregate, CifarScaleShape) {
  const Tensor32 capture({256, 64, 32, 32}, 0.5f);
  EXPECT_EQ(aggregate(capture).shape(), (Shape{64, 262144}));
}

TEST(Aggregate, RejectsTooFewSamplesReportingBoth) {
  try {
    aggregate(Tensor32({1, 8, 2, 2}));
    FAIL();
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("= 4"), std::string::npos) << msg;
    EXPECT_NE(msg.find("C = 8"), std::string::npos) << msg;
  }
}

TEST(Aggregate, DensePathwayUnflattensChannelMajor) {
  Tensor32 flat({2, 4});
  std::iota(flat.storage().begin(), flat.storage().end(), 0.0f);
  const Tensor a = aggregate(flat, ActShape{2, 1, 2, false});
  EXPECT_EQ(a, Tensor::matrix({{0, 1, 4, 5}, {2, 3, 6, 7}}));
}

TEST(SelectChannels, OrthogonalRowsAllKept) {
  Tensor a({3, 6});
  a(0, 0) = 1;
  a(1, 2) = 5;
  a(2, 4) = -2;
  EXPECT_EQ(select_channels(a, kLosslessTau).kept, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(SelectChannels, ExactSumIsRemoved) {
  synthetic::Rng rng(1);
  Tensor a = synthetic::uniform<double>({3, 20}, rng);
  for (std::size_t j = 0; j < 20; ++j) a(2, j) = a(0, j) + a(1, j);
  ASSERT_EQ(oracle::svd_rank(a, 1e-10), 2u);
  const auto sel = select_channels(a, kLosslessTau);
  EXPECT_EQ(sel.kept.size(), 2u);
  EXPECT_EQ(sel.rank, 2u);
}

TEST(SelectChannels, ThresholdOnKnownDiagonal) {
  // Orthogonal rows with norms 4, 10, 1, 6: the PQR diagonal is [10, 6, 4, 1].
  Tensor a({4, 5});
  a(0, 0) = 4;
  a(1, 1) = 10;
  a(2, 2) = 1;
  a(3, 3) = 6;
  const auto sel = select_channels(a, 0.5);
  EXPECT_EQ(sel.kept, (std::vector<std::size_t>{1, 3}));
  ASSERT_EQ(sel.factorization.diag.size(), 4u);
  EXPECT_EQ(sel.factorization.diag, (std::vector<double>{10, 6, 4, 1}));
}

TEST(SelectChannels, MinChannelsFloorKeepsTopPivots) {
  Tensor a({4, 5});
  a(0, 0) = 4;
  a(1, 1) = 10;
  a(2, 2) = 1;
  a(3, 3) = 6;
  const auto sel = select_channels(a, 0.99, 3);
  EXPECT_EQ(sel.rank, 1u);
  EXPECT_EQ(sel.kept, (std::vector<std::size_t>{0, 1, 3}));
}

TEST(SelectChannels, GlobalPositiveScalingLeavesSelectionUnchanged) {
  synthetic::Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = synthetic::uniform<double>({6, 40}, rng);
    for (std::size_t j = 0; j < 40; ++j) a(5, j) = 0.3 * a(1, j) - a(2, j) + 0.05 * a(5, j);
    Tensor scaled = a;
    for (auto& v : scaled.data()) v *= 37.5;
    for (double tau : {1e-6, 0.05, 0.2}) {
      EXPECT_EQ(select_channels(a, tau).kept, select_channels(scaled, tau).kept);
    }
  }
}

TEST(SelectChannels, RejectsUnderdeterminedInput) {
  EXPECT_THROW(select_channels(Tensor({4, 4}), kLosslessTau), NumericalError);
}

TEST(Recovery, NothingPrunedIsIdentity) {
  synthetic::Rng rng(3);
  const Tensor a = synthetic::uniform<double>({4, 30}, rng);
  const std::vector<std::size_t> kept{0, 1, 2, 3};
  EXPECT_EQ(compute_recovery(a, kept), Tensor::identity(4));
}

TEST(Recovery, ExactCombinationRow) {
  synthetic::Rng rng(4);
  Tensor a = synthetic::uniform<double>({3, 25}, rng);
  for (std::size_t j = 0; j < 25; ++j) a(2, j) = 2.0 * a(0, j) + a(1, j);
  const std::vector<std::size_t> kept{0, 1};
  const Tensor l = compute_recovery(a, kept);
  EXPECT_LE(max_abs_diff(l, oracle::pinv_recovery(a, kept)), 1e-10);
  EXPECT_NEAR(l(2, 0), 2.0, 1e-10);
  EXPECT_NEAR(l(2, 1), 1.0, 1e-10);
  EXPECT_EQ(l(0, 0), 1.0);
  EXPECT_EQ(l(0, 1), 0.0);
  EXPECT_EQ(l(1, 1), 1.0);
  EXPECT_NEAR(recovery_residual(a, kept, l), 0.0, 1e-12);
}

TEST(Recovery, NearDependentResidualMatchesOracle) {
  synthetic::Rng rng(5);
  Tensor a = synthetic::uniform<double>({5, 60}, rng);
  for (std::size_t j = 0; j < 60; ++j) a(3, j) = a(0, j) - 0.5 * a(4, j) + 0.01 * a(3, j);
  const auto sel = select_channels(a, 0.1);
  ASSERT_EQ(sel.kept.size(), 4u);
  const Tensor l = compute_recovery(a, sel.kept);
  const double resid = recovery_residual(a, sel.kept, l);
  EXPECT_GT(resid, 0.0);
  EXPECT_NEAR(resid, oracle::residual(a, sel.kept, oracle::pinv_recovery(a, sel.kept)), 1e-8);
  EXPECT_LE(max_abs_diff(l, oracle::pinv_recovery(a, sel.kept)), 1e-8);
}

TEST(Recovery, KeptRowsAreExactUnitVectors) {
  synthetic::Rng rng(6);
  const Tensor a = synthetic::uniform<double>({6, 30}, rng);
  const std::vector<std::size_t> kept{1, 2, 4};
  const Tensor l = compute_recovery(a, kept);
  for (std::size_t j = 0; j < kept.size(); ++j)
    for (std::size_t c = 0; c < kept.size(); ++c) EXPECT_EQ(l(kept[j], c), j == c ? 1.0 : 0.0);
}

TEST(AdaptConv, IdentityRecoveryLeavesKernels) {
  synthetic::Rng rng(7);
  const auto conv = synthetic::random_conv(4, 3, 3, rng);
  EXPECT_EQ(adapt_conv_consumer(conv, Tensor::identity(4)), conv);
}

TEST(AdaptConv, PointwiseReducesToMatmul) {
  synthetic::Rng rng(8);
  const auto conv = synthetic::random_conv(5, 3, 1, rng);
  const Tensor l = synthetic::uniform<double>({5, 2}, rng);
  const auto adapted = adapt_conv_consumer(conv, l);
  const Tensor w = conv.weights.reshaped({3, 5}).cast<double>();
  const Tensor expected = oracle::naive_matmul(w, l);
  EXPECT_EQ(adapted.weights.shape(), (Shape{3, 2, 1, 1}));
  EXPECT_LE(max_abs_diff(adapted.weights.reshaped({3, 2}), expected), 1e-6);
}

TEST(AdaptConv, FunctionalEquivalenceWithExpandedInput) {
  synthetic::Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const auto conv = synthetic::random_conv(6, 4, 3, rng, 1, 1);
    const Tensor l = synthetic::uniform<double>({6, 4}, rng);
    const Tensor32 xprime = synthetic::normal({2, 4, 7, 7}, rng);
    const Tensor32 expanded = oracle::expand_channels(xprime, l, 49);
    EXPECT_LE(max_abs_diff(run_layer(adapt_conv_consumer(conv, l), xprime), run_layer(conv, expanded)), 1e-4);
  }
}

TEST(AdaptConv, RejectsWrongRecoveryShape) {
  synthetic::Rng rng(10);
  EXPECT_THROW(adapt_conv_consumer(synthetic::random_conv(4, 3, 3, rng), Tensor({5, 2})), ShapeError);
}

TEST(AdaptDense, IdentityRecoveryLeavesWeights) {
  synthetic::Rng rng(11);
  const auto dense = synthetic::random_dense(12, 5, rng);
  EXPECT_EQ(adapt_dense_consumer(dense, Tensor::identity(3), 2, 2), dense);
}

TEST(AdaptDense, NoSpatialAxisReducesToMatmul) {
  synthetic::Rng rng(12);
  const auto dense = synthetic::random_dense(6, 4, rng);
  const Tensor l = synthetic::uniform<double>({6, 3}, rng);
  const auto adapted = adapt_dense_consumer(dense, l, 1, 1);
  EXPECT_LE(max_abs_diff(adapted.weights, oracle::naive_matmul(dense.weights.cast<double>(), l)), 1e-6);
}

TEST(AdaptDense, FunctionalEquivalenceWithExpandedInput) {
  synthetic::Rng rng(13);
  const auto dense = synthetic::random_dense(5 * 3 * 2, 7, rng);
  const Tensor l = synthetic::uniform<double>({5, 3}, rng);
  const Tensor32 xprime = synthetic::normal({4, 3 * 3 * 2}, rng);
  const Tensor32 expanded = oracle::expand_channels(xprime, l, 6);
  EXPECT_LE(max_abs_diff(run_layer(adapt_dense_consumer(dense, l, 3, 2), xprime), run_layer(dense, expanded)), 1e-4);
}

TEST(AdaptDense, RejectsIndivisibleInput) {
  synthetic::Rng rng(14);
  EXPECT_THROW(adapt_dense_consumer(synthetic::random_dense(10, 2, rng), Tensor::identity(2), 2, 2), ShapeError);
}

TEST(FindConsumer, WalksPastChannelwiseLayers) {
  const Model m = synthetic::random_vgg(15);
  const auto path = find_consumer(m, 0);
  ASSERT_TRUE(path);
  EXPECT_EQ(path->consumer, 3u);
  EXPECT_EQ(path->batchnorms, (std::vector<std::size_t>{1}));
  EXPECT_FALSE(path->dense);
  EXPECT_FALSE(find_consumer(m, 1));
  const auto prunable = prunable_layers(m);
  ASSERT_EQ(prunable.size(), 3u);
  const auto last = find_consumer(m, prunable.back());
  ASSERT_TRUE(last);
  EXPECT_TRUE(last->dense);
  EXPECT_EQ(last->consumer, m.layers.size() - 1);
}

TEST(PruneLayer, IndependentChannelsLeaveModelUnchanged) {
  const Model m = synthetic::random_vgg(16);
  const auto batch = batch_for(m, 8, 17);
  const auto result = prune_layer(m, 0, batch, PruneConfig{});
  EXPECT_EQ(result.record.status, PruneStatus::unchanged);
  EXPECT_EQ(result.record.channels_after, result.record.channels_before);
  EXPECT_EQ(result.model, m);
  EXPECT_TRUE(result.record.removed_indices.empty());
}

TEST(PruneLayer, ExactCombinationFilterRemoved) {
  const Model m = linear_combo_net(18);
  const auto batch = batch_for(m, 4, 19);
  const auto result = prune_layer(m, 0, batch, PruneConfig{});
  EXPECT_EQ(result.record.status, PruneStatus::pruned);
  EXPECT_EQ(result.record.channels_before, 5u);
  EXPECT_EQ(result.record.channels_after, 4u);
  EXPECT_EQ(conv_channels(result.model, 0), 4u);
  EXPECT_EQ(std::get<Conv2D>(result.model.layers[1]).in_channels(), 4u);
  EXPECT_NO_THROW(validate_classifier(result.model));
  EXPECT_LE(logit_drift(m, result.model, batch), 1e-3);
  EXPECT_LE(logit_drift(m, result.model, batch_for(m, 4, 20)), 1e-3);
  EXPECT_LE(result.record.recovery_residual, result.record.residual_bound);
  EXPECT_LT(result.record.flops_after, result.record.flops_before);
  EXPECT_LT(result.record.params_after, result.record.params_before);
}

TEST(PruneLayer, BatchNormChannelsPrunedTogether) {
  // conv → BN → ReLU → conv where filter d = α·filter j and BN_d is set so
  // that BN_d(α·x) = α·BN_j(x): the dependence survives to the tap.
  synthetic::Rng rng(21);
  Model m;
  m.input_shape = {3, 8, 8};
  auto conv = synthetic::random_conv(3, 6, 3, rng, 1, 1);
  auto bn = synthetic::random_batchnorm(6, rng);
  const std::size_t d = 2, j = 4;
  const float alpha = 1.75f;
  const std::size_t stride = conv.weights.size() / 6;
  for (std::size_t s = 0; s < stride; ++s) conv.weights[d * stride + s] = alpha * conv.weights[j * stride + s];
  (*conv.bias)[d] = alpha * (*conv.bias)[j];
  bn.gamma[d] = bn.gamma[j];
  bn.running_var[d] = bn.running_var[j];
  bn.running_mean[d] = alpha * bn.running_mean[j];
  bn.beta[d] = alpha * bn.beta[j];
  m.layers.emplace_back(conv);
  m.layers.emplace_back(bn);
  m.layers.emplace_back(Activation{});
  m.layers.emplace_back(synthetic::random_conv(6, 4, 3, rng, 1, 1));
  m.layers.emplace_back(Flatten{});
  m.layers.emplace_back(synthetic::random_dense(4 * 64, 3, rng));

  const auto batch = batch_for(m, 4, 22);
  const auto result = prune_layer(m, 0, batch, PruneConfig{});
  ASSERT_EQ(result.record.removed_indices.size(), 1u);
  const std::size_t removed = result.record.removed_indices[0];
  EXPECT_TRUE(removed == d || removed == j);
  const auto& pruned_bn = std::get<BatchNorm>(result.model.layers[1]);
  EXPECT_EQ(pruned_bn.channels(), 5u);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(pruned_bn.gamma[k], bn.gamma[result.record.kept_indices[k]]);
    EXPECT_EQ(pruned_bn.running_var[k], bn.running_var[result.record.kept_indices[k]]);
  }
  EXPECT_LE(logit_drift(m, result.model, batch), 1e-3);
  EXPECT_LE(logit_drift(m, result.model, batch_for(m, 4, 23)), 1e-3);
}

TEST(PruneLayer, DenseConsumerPathway) {
  synthetic::RedundantNetOptions opt;
  opt.convs = 1;
  opt.channels = 8;
  opt.dependent_per_layer = 3;
  const auto net = synthetic::redundant_net(24, opt);
  const auto batch = batch_for(net.model, 4, 25);
  const auto result = prune_layer(net.model, 0, batch, PruneConfig{});
  EXPECT_EQ(result.record.consumer_index, net.model.layers.size() - 1);
  EXPECT_EQ(result.record.channels_after, 5u);
  EXPECT_EQ(std::get<Dense>(result.model.layers.back()).in_features(), 5u * 8 * 8);
  EXPECT_LE(logit_drift(net.model, result.model, batch), 1e-3);
  EXPECT_LE(logit_drift(net.model, result.model, batch_for(net.model, 4, 26)), 1e-3);
}

TEST(PruneLayer, LargeTauOnRandomModelsRemovesWithResidual) {
  int shrunk = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Model m = synthetic::random_vgg(100 + seed);
    const auto batch = batch_for(m, 8, 200 + seed);
    PruneConfig config;
    config.tau = 0.1;
    const auto result = prune_layer(m, prunable_layers(m).back(), batch, config);
    if (result.record.channels_after < result.record.channels_before) {
      ++shrunk;
      EXPECT_LE(result.record.recovery_residual, result.record.residual_bound);
    }
  }
  EXPECT_GE(shrunk, 4);
}

TEST(PruneLayer, ChannelCountFollowsEffectiveRankAndFloor) {
  const Model m = synthetic::random_vgg(30);
  const auto batch = batch_for(m, 8, 31);
  for (double tau : {0.05, 0.3, 0.9}) {
    for (std::size_t floor : {1u, 10u}) {
      PruneConfig config;
      config.tau = tau;
      config.min_channels_kept = floor;
      const auto rec = prune_layer(m, 0, batch, config).record;
      EXPECT_EQ(rec.channels_after, std::min(rec.channels_before, std::max(rec.effective_rank, floor)));
    }
  }
}

TEST(PruneLayer, ResidualNeverExceedsPseudoInverseOracle) {
  const Model m = synthetic::random_vgg(32);
  const auto batch = batch_for(m, 8, 33);
  PruneConfig config;
  config.tau = 0.2;
  for (std::size_t layer : prunable_layers(m)) {
    const auto result = prune_layer(m, layer, batch, config);
    if (result.record.status != PruneStatus::pruned) continue;
    const auto path = find_consumer(m, layer);
    const std::size_t tap = path->consumer;
    const auto trace = forward_with_taps(m, batch.images, std::span<const std::size_t>(&tap, 1));
    const Tensor a = path->dense ? aggregate(trace.captures.at(tap), path->tap_shape) : aggregate(trace.captures.at(tap));
    const auto& kept = result.record.kept_indices;
    const double oracle_resid = oracle::residual(a, kept, oracle::pinv_recovery(a, kept));
    EXPECT_LE(result.record.recovery_residual, oracle_resid + 1e-8);
  }
}

TEST(PruneLayer, NonPrunableLayerIsSkippedNoOp) {
  const Model m = synthetic::random_vgg(34);
  const auto batch = batch_for(m, 2, 35);
  const auto bn = prune_layer(m, 1, batch, PruneConfig{});
  EXPECT_EQ(bn.record.status, PruneStatus::skipped);
  EXPECT_FALSE(bn.record.message.empty());
  EXPECT_EQ(bn.model, m);
  const auto head = prune_layer(m, m.layers.size() - 1, batch, PruneConfig{});
  EXPECT_EQ(head.record.status, PruneStatus::skipped);
}

TEST(PruneLayer, RejectsInvalidTau) {
  const Model m = synthetic::random_vgg(36);
  PruneConfig config;
  config.tau = 1.0;
  EXPECT_THROW(prune_layer(m, 0, batch_for(m, 2, 37), config), Error);
}

TEST(PruneModel, ZeroLayersSelectedIsNoOp) {
  const Model m = synthetic::random_vgg(38);
  PruneConfig config;
  config.layers = std::vector<std::size_t>{};
  const auto out = prune_model(m, batch_for(m, 4, 39), config);
  EXPECT_EQ(out.model, m);
  EXPECT_TRUE(out.report.records.empty());
  EXPECT_EQ(out.report.ratios.params_percent, 0.0);
}

TEST(PruneModel, RedundantReluNetShrinksEveryLayerLosslessly) {
  const auto net = synthetic::redundant_net(40);
  const auto calib = batch_for(net.model, 16, 41);
  const auto out = prune_model(net.model, calib, PruneConfig{});
  ASSERT_EQ(out.report.records.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& rec = out.report.records[i];
    EXPECT_EQ(rec.status, PruneStatus::pruned);
    EXPECT_EQ(rec.channels_after, 12u) << "layer " << rec.layer_index;
    EXPECT_EQ(conv_channels(out.model, net.conv_indices[i]), 12u);
  }
  EXPECT_LE(logit_drift(net.model, out.model, calib), 1e-3);
  EXPECT_LE(logit_drift(net.model, out.model, batch_for(net.model, 16, 42)), 1e-3);
}

TEST(PruneModel, LinearNetWithGeneralCombinations) {
  synthetic::RedundantNetOptions opt;
  opt.relu = false;
  const auto net = synthetic::redundant_net(43, opt);
  const auto calib = batch_for(net.model, 16, 44);
  const auto out = prune_model(net.model, calib, PruneConfig{});
  ASSERT_EQ(out.report.records.size(), 3u);
  EXPECT_EQ(out.report.records[0].channels_after, 12u);
  EXPECT_EQ(out.report.records[1].channels_after, 12u);
  // max-pooling sits between the last conv and its consumer and does not
  // commute with signed combinations, so nothing there is exactly dependent
  EXPECT_EQ(out.report.records[2].status, PruneStatus::unchanged);
  EXPECT_LE(logit_drift(net.model, out.model, calib), 1e-3);
  EXPECT_LE(logit_drift(net.model, out.model, batch_for(net.model, 16, 45)), 1e-3);
}

TEST(PruneModel, TauSweepRemovalIsMonotone) {
  const Model m = synthetic::random_vgg(46);
  const auto calib = batch_for(m, 8, 47);
  std::size_t previous = 0;
  for (double tau : {0.0, 0.05, 0.1, 0.2}) {
    PruneConfig config;
    config.tau = tau;
    const auto out = prune_model(m, calib, config);
    EXPECT_GE(out.report.channels_removed(), previous) << "tau " << tau;
    previous = out.report.channels_removed();
    EXPECT_NO_THROW(validate_classifier(out.model));
  }
  EXPECT_GT(previous, 0u);
}

TEST(PruneModel, ReportRatiosMatchMetricsRecomputation) {
  const Model m = synthetic::random_vgg(48);
  const auto calib = batch_for(m, 8, 49);
  PruneConfig config;
  config.tau = 0.2;
  const auto out = prune_model(m, calib, config);
  EXPECT_EQ(out.report.ratios, reduction_ratios(count_costs(m), count_costs(out.model)));
  EXPECT_EQ(out.report.costs_after.total_macs, count_costs(out.model).total_macs);
  EXPECT_LE(out.report.costs_after.total_macs, out.report.costs_before.total_macs);
  EXPECT_LE(out.report.costs_after.total_params, out.report.costs_before.total_params);
}

TEST(PruneModel, FailedLayerIsRecordedAndSkipped) {
  // One image gives 16 samples at the 4×4 stage: enough for the 6-channel
  // conv, too few for the 16-channel one.
  synthetic::Rng rng(50);
  Model m;
  m.input_shape = {3, 8, 8};
  auto c0 = synthetic::random_conv(3, 6, 3, rng, 1, 1);
  synthetic::inject_dependent_filters(c0, 2, rng, true);
  m.layers.emplace_back(c0);
  m.layers.emplace_back(Activation{});
  m.layers.emplace_back(Pool{PoolKind::max, 2, 2});
  m.layers.emplace_back(synthetic::random_conv(6, 16, 1, rng));
  m.layers.emplace_back(Activation{});
  m.layers.emplace_back(Flatten{});
  m.layers.emplace_back(synthetic::random_dense(16 * 16, 3, rng));
  const auto calib = batch_for(m, 1, 51);
  const auto out = prune_model(m, calib, PruneConfig{});
  ASSERT_EQ(out.report.records.size(), 2u);
  EXPECT_EQ(out.report.records[0].status, PruneStatus::pruned);
  EXPECT_EQ(out.report.records[1].status, PruneStatus::failed);
  EXPECT_NE(out.report.records[1].message.find("B*H*W"), std::string::npos);
  EXPECT_NO_THROW(validate_classifier(out.model));
}

TEST(PruneModel, ReportJsonCarriesSchemaFields) {
  const auto net = synthetic::redundant_net(52);
  const auto out = prune_model(net.model, batch_for(net.model, 8, 53), PruneConfig{});
  const auto doc = to_json(out.report);
  for (const char* key : {"records", "ratios", "config", "timestamp", "costs_before", "costs_after"}) {
    EXPECT_TRUE(doc.contains(key)) << key;
  }
  EXPECT_EQ(doc["records"].size(), 3u);
  for (const char* key : {"layer_index", "channels_before", "channels_after", "kept_indices", "diag_magnitudes",
                          "recovery_residual", "flops_before", "flops_after", "params_before", "params_after"}) {
    EXPECT_TRUE(doc["records"][0].contains(key)) << key;
  }
  EXPECT_EQ(doc["config"]["tau"], kLosslessTau);
  const std::string ts = doc["timestamp"];
  EXPECT_EQ(ts.size(), 20u);
  EXPECT_EQ(ts[10], 'T');
  EXPECT_EQ(ts.back(), 'Z');
}
