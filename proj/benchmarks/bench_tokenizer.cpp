#include <benchmark/benchmark.h>

#include "suma/grammar.hpp"
#include "suma/rng.hpp"
#include "suma/tokenizer.hpp"

namespace {

void BM_BpeTrain(benchmark::State& state) {
    suma::Rng rng(11);
    const std::string corpus = suma::make_corpus(rng, 200);
    for (auto _ : state) {
        benchmark::DoNotOptimize(suma::bpe_train(corpus, 512));
    }
}
BENCHMARK(BM_BpeTrain);

void BM_BpeEncode(benchmark::State& state) {
    suma::Rng rng(12);
    const std::string corpus = suma::make_corpus(rng, 200);
    const suma::Vocab vocab = suma::bpe_train(corpus, 512);
    const std::string probe = suma::make_corpus(rng, 20);
    for (auto _ : state) {
        benchmark::DoNotOptimize(vocab.encode(probe));
    }
    state.SetBytesProcessed(
        static_cast<std::int64_t>(state.iterations() * probe.size()));
}
BENCHMARK(BM_BpeEncode);

void BM_WordEncode(benchmark::State& state) {
    suma::Rng rng(13);
    const std::string probe = suma::make_corpus(rng, 20);
    const suma::WordTokenizer tok;
    for (auto _ : state) {
        benchmark::DoNotOptimize(tok.encode(probe));
    }
}
BENCHMARK(BM_WordEncode);

}  // namespace
