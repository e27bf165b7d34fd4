// SPDX-License-Identifier: Apache-2.0
#include <tmlpred/langsim.hpp>

#include <benchmark/benchmark.h>

#include <random>

using namespace tmlpred::langsim;

namespace
{

std::vector<TypologicalVector> random_vectors(std::size_t n, std::size_t dim)
{
    std::mt19937_64 rng(42);
    std::normal_distribution<double> d;
    std::vector<TypologicalVector> out;
    for (std::size_t i = 0; i < n; ++i)
    {
        std::vector<std::optional<double>> v(dim);
        for (auto& x: v)
            x = d(rng);
        out.push_back(TypologicalVector::from_values("l" + std::to_string(i), std::move(v)));
    }
    return out;
}

void BM_CosineDistance(benchmark::State& state)
{
    auto const v = random_vectors(2, static_cast<std::size_t>(state.range(0)));
    for (auto _: state)
        benchmark::DoNotOptimize(cosine_distance(v[0], v[1]));
}
BENCHMARK(BM_CosineDistance)->Arg(64)->Arg(289)->Arg(1024);

void BM_CloseThreshold(benchmark::State& state)
{
    auto const v = random_vectors(static_cast<std::size_t>(state.range(0)), 289);
    for (auto _: state)
        benchmark::DoNotOptimize(close_threshold(v));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_CloseThreshold)->Arg(50)->Arg(100)->Arg(200)->Complexity();

} // namespace
