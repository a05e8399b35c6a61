#include <benchmark/benchmark.h>

#include <limits>
#include <vector>

#include "exlab/field.hpp"
#include "exlab/kacrice.hpp"
#include "exlab/kernels.hpp"
#include "exlab/topology.hpp"

using namespace exlab;

namespace {

GridSpec grid(double side) {
  GridSpec g;
  g.side_length = side;
  g.padding = 8.0;
  return g;
}

void BM_KernelDerivative(benchmark::State& state) {
  const KernelSpec k = KernelSpec::bargmann_fock(2);
  const std::vector<int> alpha{2, 2};
  const std::vector<double> x{0.3, -0.7};
  for (auto _ : state) benchmark::DoNotOptimize(eval_kernel_derivative(k, alpha, x));
}
BENCHMARK(BM_KernelDerivative);

void BM_BesselKernel(benchmark::State& state) {
  const KernelSpec k = KernelSpec::random_plane_wave();
  const std::vector<double> x{3.3, -1.7};
  for (auto _ : state) benchmark::DoNotOptimize(eval_kernel(k, x));
}
BENCHMARK(BM_BesselKernel);

void BM_CirculantSample(benchmark::State& state) {
  const GridSpec g = grid(static_cast<double>(state.range(0)));
  const CirculantEmbedding emb(KernelSpec::bargmann_fock(2), g);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(emb.sample(++seed));
}
BENCHMARK(BM_CirculantSample)->Arg(40)->Arg(80)->Arg(160)->Unit(benchmark::kMillisecond);

void BM_CountExcursions(benchmark::State& state) {
  const GridSpec g = grid(static_cast<double>(state.range(0)));
  const FieldSample s = sample_field(KernelSpec::bargmann_fock(2), g, 1);
  for (auto _ : state) benchmark::DoNotOptimize(count_excursion_components(s, 0.0, central_box(g)));
}
BENCHMARK(BM_CountExcursions)->Arg(40)->Arg(160)->Unit(benchmark::kMillisecond);

void BM_CountLevels(benchmark::State& state) {
  const GridSpec g = grid(static_cast<double>(state.range(0)));
  const FieldSample s = sample_field(KernelSpec::bargmann_fock(2), g, 1);
  for (auto _ : state) benchmark::DoNotOptimize(count_level_components(s, 0.0, central_box(g)));
}
BENCHMARK(BM_CountLevels)->Arg(40)->Arg(160)->Unit(benchmark::kMillisecond);

void BM_CriticalPoints(benchmark::State& state) {
  const GridSpec g = grid(40.0);
  const FieldSample s = sample_field(KernelSpec::bargmann_fock(2), g, 1);
  const double inf = std::numeric_limits<double>::infinity();
  for (auto _ : state) benchmark::DoNotOptimize(find_critical_points(s, -inf, inf, central_box(g)));
}
BENCHMARK(BM_CriticalPoints)->Unit(benchmark::kMillisecond);

void BM_OnePointIntensity(benchmark::State& state) {
  const KernelSpec k = KernelSpec::bargmann_fock(2);
  for (auto _ : state) benchmark::DoNotOptimize(one_point_critical_intensity(k, 0.5, std::nullopt, {10000, 1, 1}));
}
BENCHMARK(BM_OnePointIntensity)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
