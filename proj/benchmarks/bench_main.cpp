#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "vdepth/gemm.hpp"
#include "vdepth/inference.hpp"
#include "vdepth/metrics.hpp"
#include "vdepth/pipeline.hpp"
#include "vdepth/synthdata.hpp"

using namespace vdepth;

namespace {

std::vector<float> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

void BM_Gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto k = static_cast<std::size_t>(state.range(2));
  const auto a = random_values(m * k, 1), b = random_values(k * n, 2);
  std::vector<float> c(m * n);
  for (auto _ : state) {
    gemm<float>(false, false, m, n, k, 1.0f, a.data(), k, b.data(), n, 0.0f, c.data(), n);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * m * n * k, benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}
BENCHMARK(BM_Gemm)->Args({64, 1024, 288})->Args({128, 256, 1152})->Args({256, 256, 648});

SceneSpec scene(std::size_t size) {
  SceneSpec spec;
  spec.height = spec.width = size;
  return spec;
}

void BM_BackboneFeatures(benchmark::State& state) {
  const auto size = static_cast<std::size_t>(state.range(0));
  TrainConfig config;
  DepthModel model(config);
  const auto clip = generate_synthetic_sequence(scene(size), 1, 3);
  const Tensor<float> frame = clip.rgb[0].reshaped({1, 3, size, size});
  for (auto _ : state) benchmark::DoNotOptimize(extract_features(model.backbone, frame));
}
BENCHMARK(BM_BackboneFeatures)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Inference(benchmark::State& state) {
  const auto mode = state.range(0) == 0 ? InferenceMode::Serial : InferenceMode::ParallelSpatial;
  TrainConfig config;
  DepthModel model(config);
  const auto clip = generate_synthetic_sequence(scene(64), 32, 3);
  InferenceOptions options;
  options.chunk = 32;
  for (auto _ : state) benchmark::DoNotOptimize(run_inference(model, clip.rgb, mode, options));
  state.SetLabel(mode_name(mode));
  state.counters["fps"] = benchmark::Counter(static_cast<double>(clip.rgb.size()), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_Inference)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_TrainingStep(benchmark::State& state) {
  TrainConfig config;
  config.use_gan = state.range(0) != 0;
  config.epochs = 2;
  config.warmup_epochs = config.use_gan ? 0 : 1;
  config.steps_per_epoch = 1;
  config.batch_sequences = 4;
  config.val_fraction = 0;
  config.validate_each_epoch = false;
  const Dataset data = generate_dataset(scene(64), 4, 5, 11);
  for (auto _ : state) benchmark::DoNotOptimize(train(config, data));
  state.counters["steps/s"] = benchmark::Counter(2.0, benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_TrainingStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->Iterations(2);

void BM_Ssim(benchmark::State& state) {
  const auto size = static_cast<std::size_t>(state.range(0));
  const auto clip = generate_synthetic_sequence(scene(size), 2, 5);
  const Tensor<double> a = clip.depth[0].cast<double>(), b = clip.depth[1].cast<double>();
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b, 10.0));
}
BENCHMARK(BM_Ssim)->Arg(64)->Arg(128);

void BM_OpticalFlow(benchmark::State& state) {
  const auto size = static_cast<std::size_t>(state.range(0));
  const auto clip = generate_synthetic_sequence(scene(size), 2, 5);
  const Tensor<double> a = clip.depth[0].cast<double>(), b = clip.depth[1].cast<double>();
  for (auto _ : state) benchmark::DoNotOptimize(optical_flow(a, b));
}
BENCHMARK(BM_OpticalFlow)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
