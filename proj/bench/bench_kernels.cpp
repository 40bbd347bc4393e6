// Parallel kernels against their single-threaded references.

#include <benchmark/benchmark.h>

#include <random>

#include "tassnet/distance_transform.hpp"
#include "tassnet/kernels.hpp"
#include "tassnet/reference_kernels.hpp"

using namespace tassnet;

namespace {

struct ConvCase {
  ConvSpec spec;
  Tensor x;
  std::vector<float> w;
};

ConvCase make_case(int channels, int groups, int side) {
  ConvCase c;
  c.spec.in_channels = c.spec.out_channels = channels;
  c.spec.groups = groups;
  c.x = Tensor(1, channels, side / 4, side, side);
  std::mt19937_64 rng(1);
  std::normal_distribution<float> g;
  for (auto& v : c.x.data) v = g(rng);
  c.w.resize(c.spec.weight_count());
  for (auto& v : c.w) v = g(rng);
  return c;
}

void BM_ConvForward(benchmark::State& st) {
  const auto c = make_case(static_cast<int>(st.range(0)), static_cast<int>(st.range(1)), 32);
  Tensor y;
  for (auto _ : st) {
    kernels::conv_forward(c.x, c.w, {}, c.spec, y);
    benchmark::DoNotOptimize(y.data.data());
  }
}

void BM_ConvForwardReference(benchmark::State& st) {
  const auto c = make_case(static_cast<int>(st.range(0)), static_cast<int>(st.range(1)), 32);
  for (auto _ : st) benchmark::DoNotOptimize(reference::conv_forward<float>(c.x, c.w, {}, c.spec));
}

void BM_ConvBackwardInput(benchmark::State& st) {
  const auto c = make_case(static_cast<int>(st.range(0)), static_cast<int>(st.range(1)), 32);
  Tensor dx;
  for (auto _ : st) {
    kernels::conv_backward_input(c.x, c.w, c.spec, c.x.spatial(), dx);
    benchmark::DoNotOptimize(dx.data.data());
  }
}

void BM_ConvBackwardInputReference(benchmark::State& st) {
  const auto c = make_case(static_cast<int>(st.range(0)), static_cast<int>(st.range(1)), 32);
  for (auto _ : st) benchmark::DoNotOptimize(reference::conv_backward_input<float>(c.x, c.w, c.spec, c.x.spatial()));
}

void BM_ConvBackwardWeight(benchmark::State& st) {
  const auto c = make_case(static_cast<int>(st.range(0)), static_cast<int>(st.range(1)), 32);
  std::vector<float> dw(c.w.size());
  for (auto _ : st) {
    kernels::conv_backward_weight(c.x, c.x, c.spec, dw);
    benchmark::DoNotOptimize(dw.data());
  }
}

void BM_ConvBackwardWeightReference(benchmark::State& st) {
  const auto c = make_case(static_cast<int>(st.range(0)), static_cast<int>(st.range(1)), 32);
  for (auto _ : st) benchmark::DoNotOptimize(reference::conv_backward_weight<float>(c.x, c.x, c.spec));
}

std::vector<std::uint8_t> sphere(long side) {
  std::vector<std::uint8_t> m(static_cast<std::size_t>(side * side * side));
  const double r = side / 3.0, c = side / 2.0;
  for (long z = 0; z < side; ++z)
    for (long y = 0; y < side; ++y)
      for (long x = 0; x < side; ++x) {
        const double d = (x - c) * (x - c) + (y - c) * (y - c) + (z - c) * (z - c);
        m[static_cast<std::size_t>(x + side * (y + side * z))] = std::abs(std::sqrt(d) - r) < 1.0;
      }
  return m;
}

void BM_DistanceTransform(benchmark::State& st) {
  const long n = st.range(0);
  const auto m = sphere(n);
  for (auto _ : st) benchmark::DoNotOptimize(squared_distance_transform(m, {n, n, n}, {1.0, 1.0, 2.0}));
}

void BM_DistanceTransformSerial(benchmark::State& st) {
  const long n = st.range(0);
  const auto m = sphere(n);
  for (auto _ : st) benchmark::DoNotOptimize(squared_distance_transform_serial(m, {n, n, n}, {1.0, 1.0, 2.0}));
}

}  // namespace

BENCHMARK(BM_ConvForward)->Args({16, 1})->Args({32, 8})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForwardReference)->Args({16, 1})->Args({32, 8})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardInput)->Args({16, 1})->Args({32, 8})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardInputReference)->Args({16, 1})->Args({32, 8})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardWeight)->Args({16, 1})->Args({32, 8})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardWeightReference)->Args({16, 1})->Args({32, 8})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DistanceTransform)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DistanceTransformSerial)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
