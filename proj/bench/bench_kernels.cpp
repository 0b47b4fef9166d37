// Serial reference vs OpenMP kernels at tokenizer-shaped sizes.

#include <benchmark/benchmark.h>

#include <omp.h>

#include <vector>

#include "vqr/kernels.hpp"
#include "vqr/rng.hpp"

namespace {

std::vector<float> random_values(std::size_t n, std::uint64_t index) {
  vqr::Rng rng = vqr::Rng::stream(0, "init").split(index);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.normal());
  return v;
}

// Rows = batch 50 × 16 tokens; patch rows of 192 inputs to width 64.
constexpr std::size_t kRows = 800, kIn = 192, kOut = 64;

void BM_MatmulSerial(benchmark::State& state) {
  const auto a = random_values(kRows * kIn, 1), b = random_values(kIn * kOut, 2);
  std::vector<float> c(kRows * kOut);
  for (auto _ : state) {
    vqr::kernels::serial::matmul<float>(a, b, c, kRows, kIn, kOut);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * kRows * kIn * kOut);
}

void BM_MatmulOmp(benchmark::State& state) {
  omp_set_num_threads(static_cast<int>(state.range(0)));
  const auto a = random_values(kRows * kIn, 1), b = random_values(kIn * kOut, 2);
  std::vector<float> c(kRows * kOut);
  for (auto _ : state) {
    vqr::kernels::omp::matmul<float>(a, b, c, kRows, kIn, kOut);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * kRows * kIn * kOut);
}

constexpr std::size_t kQueries = 800, kCodes = 64, kDim = 16;

void BM_NearestSerial(benchmark::State& state) {
  const auto q = random_values(kQueries * kDim, 3), book = random_values(kCodes * kDim, 4);
  std::vector<std::int32_t> out(kQueries);
  for (auto _ : state) {
    vqr::kernels::serial::nearest_code<float>(q, book, out, kQueries, kCodes, kDim);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_NearestOmp(benchmark::State& state) {
  omp_set_num_threads(static_cast<int>(state.range(0)));
  const auto q = random_values(kQueries * kDim, 3), book = random_values(kCodes * kDim, 4);
  std::vector<std::int32_t> out(kQueries);
  for (auto _ : state) {
    vqr::kernels::omp::nearest_code<float>(q, book, out, kQueries, kCodes, kDim);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_MatmulSerial);
BENCHMARK(BM_MatmulOmp)->Arg(1)->Arg(2)->Arg(4);
BENCHMARK(BM_NearestSerial);
BENCHMARK(BM_NearestOmp)->Arg(1)->Arg(2)->Arg(4);

BENCHMARK_MAIN();
