// Serial vs OpenMP kernel comparison. The two backends share per-element
// summation order, so this measures scheduling overhead/speedup only.

#include <benchmark/benchmark.h>

#include <vector>

#include "gundet/kernels.hpp"
#include "gundet/rng.hpp"

using namespace gundet;

namespace {

std::vector<double> random_buffer(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

void bm_gemm(benchmark::State& state, kernels::Backend backend) {
  const int n = static_cast<int>(state.range(0));
  const auto a = random_buffer(static_cast<size_t>(n) * n, 1);
  const auto b = random_buffer(static_cast<size_t>(n) * n, 2);
  std::vector<double> c(static_cast<size_t>(n) * n);
  for (auto _ : state) {
    if (backend == kernels::Backend::openmp)
      kernels::omp::gemm(false, false, n, n, n, a.data(), b.data(), c.data(), 0.0);
    else
      kernels::serial::gemm(false, false, n, n, n, a.data(), b.data(), c.data(), 0.0);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n) * n * n);
}

void bm_conv2d(benchmark::State& state, kernels::Backend backend) {
  kernels::Conv2dShape s;
  s.in_channels = 8;
  s.height = s.width = static_cast<int>(state.range(0));
  s.out_channels = 16;
  s.kernel = 3;
  s.stride = 1;
  s.pad = 1;
  const auto in = random_buffer(static_cast<size_t>(s.in_channels) * s.height * s.width, 3);
  const auto w = random_buffer(static_cast<size_t>(s.out_channels) * s.in_channels * 9, 4);
  const auto bias = random_buffer(static_cast<size_t>(s.out_channels), 5);
  std::vector<double> out(static_cast<size_t>(s.out_channels) * s.out_height() *
                          s.out_width());
  for (auto _ : state) {
    if (backend == kernels::Backend::openmp)
      kernels::omp::conv2d_forward(s, in.data(), w.data(), bias.data(), out.data());
    else
      kernels::serial::conv2d_forward(s, in.data(), w.data(), bias.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK_CAPTURE(bm_gemm, serial, kernels::Backend::serial)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK_CAPTURE(bm_gemm, openmp, kernels::Backend::openmp)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK_CAPTURE(bm_conv2d, serial, kernels::Backend::serial)->Arg(32)->Arg(64)->Arg(128);
BENCHMARK_CAPTURE(bm_conv2d, openmp, kernels::Backend::openmp)->Arg(32)->Arg(64)->Arg(128);

BENCHMARK_MAIN();
