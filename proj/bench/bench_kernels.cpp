// Serial reference vs OpenMP kernels. Set TARNET_THREADS to cap workers.

#include "tarnet/estimators.hpp"
#include "tarnet/kernels.hpp"
#include "tarnet/random.hpp"
#include "tarnet/tar_net.hpp"

#include <benchmark/benchmark.h>

#include <vector>

using namespace tarnet;

namespace {

Tensor3 random_tensor(Rng& rng, Dims3 d) {
  Tensor3 t(d);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

template <Tensor3 (*F)(const Tensor3&, const Matrix&, int)>
void BM_ModeMultiply(benchmark::State& state) {
  const Index n = state.range(0);
  Rng rng(1);
  const Tensor3 t = random_tensor(rng, {n, n, 8});
  const Matrix m = rng.normal_matrix(n, n);
  for (auto _ : state) benchmark::DoNotOptimize(F(t, m, 2));
  state.SetItemsProcessed(state.iterations() * n * n * n * 8);
}

template <Matrix (*F)(const Matrix&, const Matrix&)>
void BM_Kronecker(benchmark::State& state) {
  const Index n = state.range(0);
  Rng rng(2);
  const Matrix a = rng.normal_matrix(n, n), b = rng.normal_matrix(n, n);
  for (auto _ : state) benchmark::DoNotOptimize(F(a, b));
  state.SetItemsProcessed(state.iterations() * n * n * n * n);
}

template <double (*F)(const TarSpec&, std::span<const double>, const DesignPair&, std::span<double>)>
void BM_TarLossGradient(benchmark::State& state) {
  const Index n = state.range(0), p = 4, t = 512;
  Rng rng(3);
  const DesignPair d = build_design(rng.normal_matrix(t + p, n), p, true);
  const TarSpec spec{TarArch::tar2, n, p, {4, 3, 2}, Activation::relu, true, true};
  std::vector<double> theta(spec.size()), grad(spec.size());
  for (double& v : theta) v = 0.1 * rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(F(spec, theta, d, grad));
  state.SetItemsProcessed(state.iterations() * t);
}

}  // namespace

BENCHMARK(BM_ModeMultiply<kernels::serial::mode_multiply>)->Name("mode_multiply/serial")->Arg(32)->Arg(96);
BENCHMARK(BM_ModeMultiply<kernels::omp::mode_multiply>)->Name("mode_multiply/omp")->Arg(32)->Arg(96);
BENCHMARK(BM_Kronecker<kernels::serial::kronecker>)->Name("kronecker/serial")->Arg(16)->Arg(40);
BENCHMARK(BM_Kronecker<kernels::omp::kronecker>)->Name("kronecker/omp")->Arg(16)->Arg(40);
BENCHMARK(BM_TarLossGradient<kernels::serial::tar_loss_gradient>)->Name("tar_loss_gradient/serial")->Arg(25)->Arg(40);
BENCHMARK(BM_TarLossGradient<kernels::omp::tar_loss_gradient>)->Name("tar_loss_gradient/omp")->Arg(25)->Arg(40);

int main(int argc, char** argv) {
  kernels::apply_thread_cap();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
