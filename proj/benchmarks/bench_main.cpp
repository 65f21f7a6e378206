#include <benchmark/benchmark.h>

#include <random>

#include "carnotgeo/checks.hpp"

using namespace carnot;

namespace {

Surface koranyi_sphere(int c) {
  SurfaceSpec s;
  s.kind = SurfaceSpec::Kind::levelset;
  s.closed = true;
  s.expr = parse("(x1^2 + x2^2)^2 + 16*x3^2 - 1", 3);
  s.box = {{-1.2, 1.2}, {-1.2, 1.2}, {-0.3, 0.3}};
  s.grid = {c, 2 * c};
  return Surface(heisenberg(1), s);
}

void BM_GroupProduct(benchmark::State& state) {
  CarnotGroup g = free_step2(static_cast<int>(state.range(0)));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  Vec x(g.n()), y(g.n());
  for (int i = 0; i < g.n(); ++i) x[i] = U(rng), y[i] = U(rng);
  for (auto _ : state) {
    x = g.product(x, y);
    benchmark::DoNotOptimize(x);
    x *= 0.5;
  }
}
BENCHMARK(BM_GroupProduct)->Arg(2)->Arg(3)->Arg(4);

void BM_Frame(benchmark::State& state) {
  CarnotGroup g = heisenberg(2);
  Vec x = Vec::Constant(g.n(), 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(g.frame(x));
}
BENCHMARK(BM_Frame);

void BM_SampleSurface(benchmark::State& state) {
  Surface s = koranyi_sphere(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(sample_surface(s));
}
BENCHMARK(BM_SampleSurface)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Assemble(benchmark::State& state) {
  Surface s = koranyi_sphere(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(assemble(s, BoundaryCondition::closed));
}
BENCHMARK(BM_Assemble)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Eigensolve(benchmark::State& state) {
  DiscreteOperator op = assemble(koranyi_sphere(static_cast<int>(state.range(0))), BoundaryCondition::closed);
  for (auto _ : state) benchmark::DoNotOptimize(eigensolve(op, 4));
}
BENCHMARK(BM_Eigensolve)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
