#include <benchmark/benchmark.h>

#include "pgada/core_math.hpp"
#include "pgada/transport.hpp"

namespace {

using pgada::Matrix;

Matrix points(std::size_t n, std::size_t d, std::uint64_t stream) {
  pgada::RngStream rng(7, stream);
  return pgada::gaussian_sample(rng, 0.0, 1.0, n, d);
}

void BM_PairwiseParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = points(n, 16, 1);
  const Matrix b = points(n, 16, 2);
  for (auto _ : state) benchmark::DoNotOptimize(pgada::pairwise_sq_dist(a, b));
}

void BM_PairwiseReference(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = points(n, 16, 1);
  const Matrix b = points(n, 16, 2);
  for (auto _ : state) benchmark::DoNotOptimize(pgada::reference::pairwise_sq_dist(a, b));
}

void BM_SinkhornParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix c = pgada::pairwise_sq_dist(points(n, 8, 3), points(n, 8, 4));
  const auto u = pgada::uniform_marginal(n);
  for (auto _ : state) benchmark::DoNotOptimize(pgada::sinkhorn(c, u, u, 0.5, 1e-9, 10000));
}

void BM_SinkhornReference(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix c = pgada::pairwise_sq_dist(points(n, 8, 3), points(n, 8, 4));
  const auto u = pgada::uniform_marginal(n);
  for (auto _ : state) benchmark::DoNotOptimize(pgada::reference::sinkhorn(c, u, u, 0.5, 1e-9, 10000));
}

}  // namespace

BENCHMARK(BM_PairwiseParallel)->Arg(256)->Arg(1024);
BENCHMARK(BM_PairwiseReference)->Arg(256)->Arg(1024);
BENCHMARK(BM_SinkhornParallel)->Arg(64)->Arg(400);
BENCHMARK(BM_SinkhornReference)->Arg(64)->Arg(400);

BENCHMARK_MAIN();
