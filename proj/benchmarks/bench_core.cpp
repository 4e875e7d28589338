#include <benchmark/benchmark.h>

#include <random>

#include "accnn/backbone.hpp"
#include "accnn/global_attention.hpp"
#include "accnn/local_context.hpp"
#include "accnn/model.hpp"

namespace {

using namespace accnn;

Tensor<float> random_image(std::size_t side, std::mt19937_64& rng) {
  Tensor<float> img({side, side, 3});
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  for (auto& v : img.values()) v = dist(rng);
  return img;
}

void BM_AffineForwardBackward(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Tensor<float> x({n}, true);
  Tensor<float> W({256, n}, true);
  Tensor<float> b({256}, true);
  fill_gaussian(x, 1.0, rng);
  fill_gaussian(W, 0.01, rng);
  for (auto _ : state) {
    Tape<float> tape;
    auto loss = sum_all(tape, affine(tape, x, W, b));
    tape.backward(loss);
    benchmark::DoNotOptimize(loss[0]);
    x.zero_grad();
    W.zero_grad();
    b.zero_grad();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n) * 256);
}
BENCHMARK(BM_AffineForwardBackward)->Arg(512)->Arg(3136);

void BM_BackboneForward(benchmark::State& state) {
  std::mt19937_64 rng(2);
  BackboneConfig cfg;
  ParamStore<float> params;
  init_backbone_params(params, cfg, rng);
  auto img = random_image(static_cast<std::size_t>(state.range(0)), rng);
  for (auto _ : state) {
    Tape<float> tape;
    tape.set_recording(false);
    auto cube = backbone_forward(tape, img, cfg, params);
    benchmark::DoNotOptimize(cube.data[0]);
  }
}
BENCHMARK(BM_BackboneForward)->Arg(128);

void BM_RoiPool(benchmark::State& state) {
  std::mt19937_64 rng(3);
  Tensor<float> data({16, 16, 64});
  fill_gaussian(data, 1.0, rng);
  FeatureCube<float> cube{data, 8, 128, 128};
  const BBox box{64, 64, 48, 40};
  for (auto _ : state) {
    Tape<float> tape;
    tape.set_recording(false);
    auto pooled = roi_pool(tape, cube, box, 7);
    benchmark::DoNotOptimize(pooled[0]);
  }
}
BENCHMARK(BM_RoiPool);

void BM_GlobalAttention(benchmark::State& state) {
  std::mt19937_64 rng(4);
  GlobalConfig cfg;
  ParamStore<float> params;
  init_global_params(params, cfg, 64, rng);
  Tensor<float> data({16, 16, 64});
  fill_gaussian(data, 1.0, rng);
  FeatureCube<float> cube{data, 8, 128, 128};
  for (auto _ : state) {
    Tape<float> tape;
    tape.set_recording(false);
    auto res = global_feature(tape, cube, cfg, params);
    benchmark::DoNotOptimize(res.f_global[0]);
  }
}
BENCHMARK(BM_GlobalAttention);

}  // namespace

BENCHMARK_MAIN();
