// Serial vs OpenMP kernels on training- and simplex-sized inputs.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "reluopt/kernels.hpp"
#include "reluopt/nn.hpp"

using namespace reluopt;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

template <auto Kernel>
void forward(benchmark::State& state) {
  const auto samples = static_cast<std::size_t>(state.range(0));
  const nn::ReluNetwork net = nn::ReluNetwork::random({4, 10, 20, 10, 1}, nn::Unconstrained{}, 1);
  const std::vector<double> in = random_values(samples * 4, 2);
  std::vector<double> out(samples);
  for (auto _ : state) {
    Kernel(net, in, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(samples));
}

template <auto Kernel>
void eliminate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  kernels::DenseRows m(n);
  m.data = random_values(n * n, 3);
  std::vector<double> column = random_values(n, 4);
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  for (auto _ : state) {
    // Repeating the same pivot grows entries only linearly.
    column[0] = 1.0;
    Kernel(m, 0, column, all, all);
    benchmark::DoNotOptimize(m.data.data());
  }
}

}  // namespace

BENCHMARK(forward<kernels::forward_batch_serial>)->Name("forward/serial")->Arg(1000)->Arg(30000);
BENCHMARK(forward<kernels::forward_batch_omp>)->Name("forward/omp")->Arg(1000)->Arg(30000);
BENCHMARK(eliminate<kernels::eliminate_serial>)->Name("eliminate/serial")->Arg(500)->Arg(2000);
BENCHMARK(eliminate<kernels::eliminate_omp>)->Name("eliminate/omp")->Arg(500)->Arg(2000);

BENCHMARK_MAIN();
