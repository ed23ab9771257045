#include <benchmark/benchmark.h>

#include "otoclab/algebra.hpp"
#include "otoclab/otoc.hpp"
#include "otoclab/spectrum.hpp"

using namespace otoclab;

namespace {

struct Setup {
    EigenSystem eig;
    EigenOperator V;

    explicit Setup(int N) {
        const auto b = build_basis(N);
        eig = diagonalize_by_parity(build_hamiltonian({N, 0.4, 0.4}, b), b);
        V = to_eigenbasis(generator_matrix(b, Generator::D_x), eig);
    }
};

void AllStates(benchmark::State& state) {
    const Setup s(static_cast<int>(state.range(0)));
    const OtocEvaluator eval(s.V, s.V, s.eig.energies);
    double t = 1e7;
    for (auto _ : state) {
        benchmark::DoNotOptimize(eval.all_states(t));
        t *= 1.01;
    }
    state.counters["dim"] = static_cast<double>(eval.dim());
}

void SingleRow(benchmark::State& state) {
    const Setup s(static_cast<int>(state.range(0)));
    const OtocEvaluator eval(s.V, s.V, s.eig.energies);
    double t = 1e7;
    for (auto _ : state) {
        benchmark::DoNotOptimize(eval.at(eval.dim() / 2, t));
        t *= 1.01;
    }
}

} // namespace

BENCHMARK(AllStates)->Arg(20)->Arg(40)->Arg(50)->Unit(benchmark::kMillisecond);
BENCHMARK(SingleRow)->Arg(20)->Arg(40)->Arg(50)->Unit(benchmark::kMicrosecond);
