#include <benchmark/benchmark.h>

#include "otoclab/algebra.hpp"
#include "otoclab/spectrum.hpp"

using namespace otoclab;

namespace {

void FullSpace(benchmark::State& state) {
    const int N = static_cast<int>(state.range(0));
    const auto b = build_basis(N);
    const auto H = build_hamiltonian({N, 0.4, 0.4}, b);
    for (auto _ : state) benchmark::DoNotOptimize(diagonalize(H));
}

void ParityRoute(benchmark::State& state) {
    const int N = static_cast<int>(state.range(0));
    const auto b = build_basis(N);
    const auto H = build_hamiltonian({N, 0.4, 0.4}, b);
    for (auto _ : state) benchmark::DoNotOptimize(diagonalize_by_parity(H, b));
}

} // namespace

BENCHMARK(FullSpace)->Arg(20)->Arg(40)->Arg(60)->Unit(benchmark::kMillisecond);
BENCHMARK(ParityRoute)->Arg(20)->Arg(40)->Arg(60)->Unit(benchmark::kMillisecond);
