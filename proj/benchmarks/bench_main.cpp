#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "rtsrts/motion.hpp"
#include "rtsrts/network.hpp"
#include "rtsrts/projector.hpp"
#include "rtsrts/tensor.hpp"

using namespace rtsrts;
using TF = tensor::Tensor<float>;

namespace {

TF random_tensor(tensor::Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(static_cast<std::size_t>(tensor::numel(shape)));
  for (auto& x : v) x = u(rng);
  return TF::from(std::move(shape), std::move(v));
}

Volume smooth_volume(std::int64_t n) {
  Grid3 g;
  g.dims = {n, n, n};
  Volume v = Volume::filled(g, 0.0f);
  for (std::int64_t k = 0; k < n; ++k)
    for (std::int64_t j = 0; j < n; ++j)
      for (std::int64_t i = 0; i < n; ++i)
        v.voxels[g.index(i, j, k)] = float(0.5 + 0.4 * std::sin(0.2 * i) * std::cos(0.15 * j + 0.1 * k));
  return v;
}

}  // namespace

static void BM_Conv3d(benchmark::State& state) {
  const auto n = state.range(0), c = state.range(1);
  const auto x = random_tensor({c, n, n, n}, 1);
  const auto k = random_tensor({c, c, 3, 3, 3}, 2);
  tensor::NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(tensor::conv3d(x, k, 1, 1).values().data());
  state.SetItemsProcessed(state.iterations() * c * c * 27 * n * n * n);
}
BENCHMARK(BM_Conv3d)->Args({16, 16})->Args({32, 8})->Unit(benchmark::kMillisecond);

static void BM_ConvTranspose3d(benchmark::State& state) {
  const auto n = state.range(0), c = state.range(1);
  const auto x = random_tensor({c, n, n, n}, 3);
  const auto k = random_tensor({c, c / 2, 4, 4, 4}, 4);
  tensor::NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(tensor::conv_transpose3d(x, k, 2, 1, 0).values().data());
}
BENCHMARK(BM_ConvTranspose3d)->Args({8, 32})->Args({16, 16})->Unit(benchmark::kMillisecond);

static void BM_ForwardNoGrad(benchmark::State& state) {
  network::NetworkConfig c;
  c.input_size = static_cast<int>(state.range(0));
  c.base_channels = static_cast<int>(state.range(1));
  const auto model = network::build(c, 1);
  const auto proj = random_tensor({1, c.input_size, c.input_size}, 5);
  tensor::NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(network::forward(model, proj).seg.values().data());
}
BENCHMARK(BM_ForwardNoGrad)->Args({32, 16})->Args({128, 8})->Unit(benchmark::kMillisecond);

static void BM_RenderDrr(benchmark::State& state) {
  const auto vol = smooth_volume(state.range(0));
  const auto geom = fit_detector(vol.grid, 37.0, state.range(1) ? Beam::Cone : Beam::Parallel, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(render_drr(vol, geom).pixels.data());
}
BENCHMARK(BM_RenderDrr)->Args({64, 0})->Args({64, 1})->Unit(benchmark::kMillisecond);

static void BM_WarpVolume(benchmark::State& state) {
  const auto vol = smooth_volume(state.range(0));
  auto dvf = DisplacementField::zeros(vol.grid);
  for (std::size_t i = 0; i < dvf.vectors.size(); i += 3) dvf.vectors[i + 2] = 2.5f;
  for (auto _ : state) benchmark::DoNotOptimize(motion::warp_volume(vol, dvf).voxels.data());
}
BENCHMARK(BM_WarpVolume)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
