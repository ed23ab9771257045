#include <benchmark/benchmark.h>

#include "otoclab/classical.hpp"

using namespace otoclab;

namespace {

void TangentRun(benchmark::State& state) {
    const ClassicalParams p{0.4, 0.4};
    const auto x0 = section_point(0.2, 0.1, 0.2, p, SectionSpec{});
    LyapunovOptions o;
    o.T = static_cast<double>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(tangent_lyapunov(*x0, p, o));
}

} // namespace

BENCHMARK(TangentRun)->Arg(1000)->Arg(20000)->Unit(benchmark::kMillisecond);
