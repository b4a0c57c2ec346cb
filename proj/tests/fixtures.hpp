#ifndef LINDEPS_TEST_FIXTURES_HPP
#define LINDEPS_TEST_FIXTURES_HPP

#include <cstdint>
#include <vector>

#include "lindeps/model.hpp"
#include "lindeps/synthetic.hpp"

namespace fixture {

/// A small network with its costs worked out by hand.
struct CostedNet {
  const char* name;
  lindeps::Model model;
  std::uint64_t macs;
  std::uint64_t params;
  std::uint64_t stored_params;
};

inline std::vector<CostedNet> costed_nets() {
  using namespace lindeps;
  synthetic::Rng rng(2024);
  std::vector<CostedNet> nets;

  // conv 3→8 3×3 pad 1 on 32×32: 8·3·9·1024 = 221184
  // dense 2048→10: 20480
  // params: 216 + 8 + 20480 + 10
  Model a;
  a.input_shape = {3, 32, 32};
  a.layers.emplace_back(synthetic::random_conv(3, 8, 3, rng, 1, 1));
  a.layers.emplace_back(Activation{});
  a.layers.emplace_back(Pool{PoolKind::max, 2, 2});
  a.layers.emplace_back(Flatten{});
  a.layers.emplace_back(synthetic::random_dense(8 * 16 * 16, 10, rng));
  nets.push_back({"conv-pool-dense", std::move(a), 241664, 20714, 20714});

  // conv 1→4 3×3 no bias on 8×8 → 6×6: 4·9·36 = 1296, params 36
  // BN(4): 8 trainable, 16 stored
  // conv 4→6 1×1 stride 2 → 3×3: 6·4·9 = 216, params 24 + 6
  // dense 54→5 no bias: 270
  Model b;
  b.input_shape = {1, 8, 8};
  b.layers.emplace_back(synthetic::random_conv(1, 4, 3, rng, 1, 0, false));
  b.layers.emplace_back(synthetic::random_batchnorm(4, rng));
  b.layers.emplace_back(Activation{});
  b.layers.emplace_back(synthetic::random_conv(4, 6, 1, rng, 2, 0));
  b.layers.emplace_back(Flatten{});
  b.layers.emplace_back(synthetic::random_dense(54, 5, rng, false));
  nets.push_back({"conv-bn-strided", std::move(b), 1782, 344, 352});

  // conv 2→3 3×3 stride 2 pad 1 on 5×5 → 3×3: 3·2·9·9 = 486, params 54 + 3
  // avg pool 3 → 1×1, dense 3→2: 6 MACs, params 8
  Model c;
  c.input_shape = {2, 5, 5};
  c.layers.emplace_back(synthetic::random_conv(2, 3, 3, rng, 2, 1));
  c.layers.emplace_back(Pool{PoolKind::avg, 3, 3});
  c.layers.emplace_back(Flatten{});
  c.layers.emplace_back(synthetic::random_dense(3, 2, rng));
  nets.push_back({"strided-padded-avgpool", std::move(c), 492, 65, 65});

  return nets;
}

}  // namespace fixture

#endif  // LINDEPS_TEST_FIXTURES_HPP
