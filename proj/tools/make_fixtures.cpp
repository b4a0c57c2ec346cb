// Writes synthetic LNDP/LNDS fixtures for trying the CLI end to end.

#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "lindeps/io.hpp"
#include "lindeps/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate synthetic lindeps fixtures", "lindeps-fixtures"};
  std::string dir = ".";
  std::uint64_t seed = 1;
  std::size_t batch = 64;
  app.add_option("--out-dir", dir, "output directory");
  app.add_option("--seed", seed, "generator seed");
  app.add_option("--batch", batch, "images per batch file");
  CLI11_PARSE(app, argc, argv);

  namespace fs = std::filesystem;
  using namespace lindeps;
  try {
    fs::create_directories(dir);
    const auto net = synthetic::redundant_net(seed);
    save_model(net.model, fs::path(dir) / "redundant.lndp");

    synthetic::Rng rng(seed + 1);
    save_batch(synthetic::random_batch(batch, net.model.input_shape, rng, 10), fs::path(dir) / "calib.lnds");
    save_batch(synthetic::random_batch(batch, net.model.input_shape, rng, 10), fs::path(dir) / "fresh.lnds");

    const auto vgg = synthetic::random_vgg(seed);
    save_model(vgg, fs::path(dir) / "vgg.lndp");
    std::cout << "wrote redundant.lndp, vgg.lndp, calib.lnds, fresh.lnds to " << dir << '\n';
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  }
  return 0;
}
