// SPDX-License-Identifier: Apache-2.0
#include <tmlpred/kb.hpp>

#include <benchmark/benchmark.h>

#include <random>

using namespace tmlpred::kb;

namespace
{

constexpr std::size_t dim = 128;

std::vector<double> random_unit(std::mt19937_64& rng)
{
    std::normal_distribution<double> d;
    std::vector<double> v(dim);
    for (auto& x: v)
        x = d(rng);
    return v;
}

void BM_Retrieve(benchmark::State& state)
{
    std::mt19937_64 rng(7);
    VectorStore store(dim);
    for (std::int64_t i = 0; i < state.range(0); ++i)
        store.add({"d" + std::to_string(i), "text " + std::to_string(i), random_unit(rng), {"p", "l"}, ""});
    auto const q = random_unit(rng);
    for (auto _: state)
        benchmark::DoNotOptimize(retrieve(q, store, 0.0, 5));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Retrieve)->Arg(100)->Arg(1000)->Arg(10000)->Complexity();

} // namespace
