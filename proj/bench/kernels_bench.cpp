// Serial reference vs OpenMP kernels on index-sized inputs.

#include <benchmark/benchmark.h>

#include <vector>

#include "plab/kernels.hpp"
#include "plab/rng.hpp"

namespace {

using namespace plab;

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Matrix m(rows, cols);
  Rng rng(seed);
  for (auto& x : m.data) x = rng.normal();
  return m;
}

template <auto Kernel>
void BM_scan(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix rows = random_matrix(n, 64, 1);
  const Matrix q = random_matrix(1, 64, 2);
  std::vector<double> out(n);
  for (auto _ : state) {
    Kernel(rows, q.row(0), out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}

template <auto Kernel>
void BM_assign(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix points = random_matrix(n, 64, 3);
  const Matrix centroids = random_matrix(100, 64, 4);
  std::vector<std::uint32_t> assign(n);
  std::vector<double> dist(n);
  for (auto _ : state) {
    Kernel(points, centroids, assign, dist);
    benchmark::DoNotOptimize(assign.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}

template <auto Kernel>
void BM_adc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  constexpr std::size_t m = 8, ksub = 256;
  std::vector<std::uint16_t> codes(n * m);
  Rng rng(5);
  for (auto& c : codes) c = static_cast<std::uint16_t>(rng.uniform_int(ksub));
  std::vector<double> table(m * ksub);
  for (auto& t : table) t = rng.normal();
  std::vector<double> out(n);
  for (auto _ : state) {
    Kernel(codes, m, table, ksub, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}

}  // namespace

BENCHMARK(BM_scan<kernels::serial::dot_scores>)->Name("dot_scores/serial")->Arg(10000)->Arg(100000);
BENCHMARK(BM_scan<kernels::omp::dot_scores>)->Name("dot_scores/omp")->Arg(10000)->Arg(100000);
BENCHMARK(BM_scan<kernels::serial::sq_distances>)->Name("sq_distances/serial")->Arg(10000)->Arg(100000);
BENCHMARK(BM_scan<kernels::omp::sq_distances>)->Name("sq_distances/omp")->Arg(10000)->Arg(100000);
BENCHMARK(BM_assign<kernels::serial::assign_nearest>)->Name("assign_nearest/serial")->Arg(1000)->Arg(10000);
BENCHMARK(BM_assign<kernels::omp::assign_nearest>)->Name("assign_nearest/omp")->Arg(1000)->Arg(10000);
BENCHMARK(BM_adc<kernels::serial::adc_scan>)->Name("adc_scan/serial")->Arg(10000)->Arg(100000);
BENCHMARK(BM_adc<kernels::omp::adc_scan>)->Name("adc_scan/omp")->Arg(10000)->Arg(100000);

int main(int argc, char** argv) {
  kernels::configure_threads_from_env();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
