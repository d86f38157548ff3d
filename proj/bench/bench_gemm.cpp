// Serial reference vs OpenMP GEMM at the shapes the policy network hits:
// padded movement tokens (batch x 36 rows) against 128-wide layers.
#include <algorithm>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "cross/kernels/gemm.h"

namespace {

using Kernel = void (*)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t, bool);

void run(benchmark::State& state, Kernel kernel) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto m = static_cast<std::size_t>(state.range(2));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  // Sized for both the nn and tn layouts.
  const std::size_t rows = std::max(n, k);
  std::vector<double> a(n * k), b(rows * m), c(rows * m);
  for (auto& v : a) v = dist(rng);
  for (auto& v : b) v = dist(rng);
  for (auto _ : state) {
    kernel(a.data(), b.data(), c.data(), n, k, m, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * k * m));
}

void BM_gemm_nn_serial(benchmark::State& s) { run(s, cross::kernels::gemm_nn_serial); }
void BM_gemm_nn_parallel(benchmark::State& s) { run(s, cross::kernels::gemm_nn_parallel); }
void BM_gemm_tn_serial(benchmark::State& s) { run(s, cross::kernels::gemm_tn_serial); }
void BM_gemm_tn_parallel(benchmark::State& s) { run(s, cross::kernels::gemm_tn_parallel); }

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({36, 128, 128})->Args({36 * 32, 128, 128})->Args({36 * 256, 128, 128})->Args({512, 192, 64});
}

}  // namespace

BENCHMARK(BM_gemm_nn_serial)->Apply(shapes);
BENCHMARK(BM_gemm_nn_parallel)->Apply(shapes);
BENCHMARK(BM_gemm_tn_serial)->Apply(shapes);
BENCHMARK(BM_gemm_tn_parallel)->Apply(shapes);

BENCHMARK_MAIN();
