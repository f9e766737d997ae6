// Serial reference kernels against their OpenMP counterparts.
//
//   bench_kernels --benchmark_filter=Matmul
//   OMP_NUM_THREADS=4 bench_kernels

#include <benchmark/benchmark.h>

#include <vector>

#include "simdino/kernels.hpp"
#include "simdino/random.hpp"
#include "simdino/theorem.hpp"

namespace k = simdino::kernels;

namespace {

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
  simdino::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

template <auto Kernel>
void Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_buffer(n * n, 1), b = random_buffer(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0);
    Kernel(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["threads"] = k::max_threads();
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * n * n * n));
}

template <auto Forward, auto Backward>
void Attention(benchmark::State& state) {
  const k::AttentionShape s{static_cast<std::size_t>(state.range(0)), 17, 4, 16};
  const auto qkv = random_buffer(s.rows() * 3 * s.width(), 3), dout = random_buffer(s.rows() * s.width(), 4);
  std::vector<double> out(s.rows() * s.width()), probs(s.probs_size()), dqkv(qkv.size());
  for (auto _ : state) {
    Forward(qkv, out, probs, s);
    std::fill(dqkv.begin(), dqkv.end(), 0.0);
    Backward(qkv, probs, dout, dqkv, s);
    benchmark::DoNotOptimize(dqkv.data());
  }
  state.counters["threads"] = k::max_threads();
}

template <auto Search>
void GradNormSearch(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(Search(d, 64, 0.5, 200, 7).max_norm);
  state.counters["threads"] = k::max_threads();
}

}  // namespace

BENCHMARK(Matmul<k::serial::matmul_nn>)->Name("Matmul/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(Matmul<k::parallel::matmul_nn>)->Name("Matmul/parallel")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(Attention<k::serial::attention_forward, k::serial::attention_backward>)->Name("Attention/serial")->Arg(8)->Arg(32);
BENCHMARK(Attention<k::parallel::attention_forward, k::parallel::attention_backward>)
    ->Name("Attention/parallel")
    ->Arg(8)
    ->Arg(32);
BENCHMARK(GradNormSearch<simdino::serial::max_grad_norm>)->Name("MaxGradNorm/serial")->Arg(16)->Arg(32);
BENCHMARK(GradNormSearch<simdino::parallel::max_grad_norm>)->Name("MaxGradNorm/parallel")->Arg(16)->Arg(32);

BENCHMARK_MAIN();
