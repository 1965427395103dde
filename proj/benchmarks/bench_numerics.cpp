#include <benchmark/benchmark.h>

#include "suma/alignment.hpp"
#include "suma/ridge.hpp"
#include "suma/rng.hpp"
#include "suma/similarity.hpp"

namespace {

suma::RealMatrix random_matrix(suma::Rng& rng, std::size_t rows, std::size_t cols) {
    suma::RealMatrix m(rows, cols);
    for (double& v : m.flat()) v = rng.normal();
    return m;
}

void BM_RidgeFit(benchmark::State& state) {
    suma::Rng rng(1);
    const auto x = random_matrix(rng, 200, static_cast<std::size_t>(state.range(0)));
    const auto y = random_matrix(rng, 200, 32);
    for (auto _ : state) {
        benchmark::DoNotOptimize(suma::ridge_fit(x, y, 1.0));
    }
}
BENCHMARK(BM_RidgeFit)->Arg(32)->Arg(128);

void BM_LinearPredictivity(benchmark::State& state) {
    suma::Rng rng(2);
    const auto features = random_matrix(rng, 160, 64);
    const auto readout = random_matrix(rng, 64, 24);
    auto responses = suma::matmul(features, readout);
    for (double& v : responses.flat()) v += 0.5 * rng.normal();
    for (auto _ : state) {
        benchmark::DoNotOptimize(suma::linear_predictivity(features, responses));
    }
}
BENCHMARK(BM_LinearPredictivity);

void BM_LinearCka(benchmark::State& state) {
    suma::Rng rng(3);
    const auto x = random_matrix(rng, 200, 128);
    const auto y = random_matrix(rng, 200, 64);
    for (auto _ : state) {
        benchmark::DoNotOptimize(suma::linear_cka(x, y));
    }
}
BENCHMARK(BM_LinearCka);

void BM_RdmSimilarity(benchmark::State& state) {
    suma::Rng rng(4);
    const auto x = random_matrix(rng, 100, 64);
    const auto y = random_matrix(rng, 100, 48);
    for (auto _ : state) {
        benchmark::DoNotOptimize(suma::rdm_similarity(x, y));
    }
}
BENCHMARK(BM_RdmSimilarity);

}  // namespace
