#include <benchmark/benchmark.h>

#include "suma/encoder.hpp"
#include "suma/rng.hpp"

namespace {

void BM_SumaForward(benchmark::State& state) {
    const std::size_t seq = static_cast<std::size_t>(state.range(0));
    const suma::EncoderConfig cfg = suma::EncoderConfig::suma(64, 8, 512, 1);
    const suma::EncoderWeights weights = suma::init_weights(cfg);
    suma::Rng rng(7);
    std::vector<suma::TokenId> tokens(seq);
    for (auto& t : tokens) t = static_cast<suma::TokenId>(rng.below(512));
    for (auto _ : state) {
        benchmark::DoNotOptimize(suma::forward(weights, tokens));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * seq));
}
BENCHMARK(BM_SumaForward)->Arg(32)->Arg(128)->Arg(256);

void BM_MultiheadAttention(benchmark::State& state) {
    const std::size_t seq = static_cast<std::size_t>(state.range(0));
    suma::Rng rng(9);
    suma::AttentionParams params;
    for (suma::RealMatrix* m : {&params.wq, &params.wk, &params.wv, &params.wo}) {
        *m = suma::RealMatrix(64, 64);
        for (double& v : m->flat()) v = rng.normal(0.0, 0.02);
    }
    suma::RealMatrix x(seq, 64);
    for (double& v : x.flat()) v = rng.normal();
    for (auto _ : state) {
        benchmark::DoNotOptimize(suma::multihead_attention(x, params, 8, true));
    }
}
BENCHMARK(BM_MultiheadAttention)->Arg(64)->Arg(256);

}  // namespace
