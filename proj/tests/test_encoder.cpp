#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "suma/encoder.hpp"
#include "suma/io.hpp"
#include "suma/rng.hpp"

using namespace suma;

namespace {

EncoderConfig small_suma(std::uint64_t seed) {
    return EncoderConfig::suma(/*d_model=*/32, /*n_heads=*/4, /*vocab_size=*/300, seed);
}

std::vector<TokenId> arbitrary_tokens(Rng& rng, std::size_t n, std::uint64_t vocab) {
    std::vector<TokenId> ids(n);
    for (auto& id : ids) id = static_cast<TokenId>(rng.below(vocab));
    return ids;
}

}  // namespace

TEST_CASE("init is seed-deterministic and seeds differ") {
    const EncoderConfig cfg = small_suma(3);
    const EncoderWeights a = init_weights(cfg);
    const EncoderWeights b = init_weights(cfg);
    CHECK(a.embeddings == b.embeddings);
    CHECK(a.blocks[0].attn.wq == b.blocks[0].attn.wq);

    EncoderConfig other = cfg;
    other.seed = 4;
    const EncoderWeights c = init_weights(other);
    CHECK_FALSE(a.blocks[0].attn.wq == c.blocks[0].attn.wq);
}

TEST_CASE("projection init matches normal(0, 0.02) statistics") {
    EncoderConfig cfg;
    cfg.d_model = 1024;
    cfg.n_heads = 8;
    cfg.components = {Component::LN1, Component::ATTN};
    cfg.unroll_depth = 1;
    cfg.vocab_size = 4;
    cfg.seed = 99;
    const EncoderWeights w = init_weights(cfg);
    double mean = 0.0;
    for (double v : w.blocks[0].attn.wq.flat()) mean += v;
    mean /= static_cast<double>(w.blocks[0].attn.wq.size());
    double var = 0.0;
    for (double v : w.blocks[0].attn.wq.flat()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(w.blocks[0].attn.wq.size());
    CHECK(std::fabs(std::sqrt(var) - 0.02) < 0.001);
    CHECK(std::fabs(mean) < 0.001);

    // Same check at full 4096 x 4096 scale, streamed through the rng.
    Rng rng(123);
    double m2 = 0.0, s2 = 0.0;
    const std::size_t n = 4096ull * 4096ull;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = rng.normal(0.0, 0.02);
        const double delta = v - m2;
        m2 += delta / static_cast<double>(i + 1);
        s2 += delta * (v - m2);
    }
    CHECK(std::fabs(std::sqrt(s2 / static_cast<double>(n)) - 0.02) < 0.001);
}

TEST_CASE("single-token attention reduces to the output-projected value vector") {
    Rng rng(7);
    const std::size_t d = 8;
    AttentionParams params;
    for (RealMatrix* m : {&params.wq, &params.wk, &params.wv, &params.wo}) {
        *m = RealMatrix(d, d);
        for (double& v : m->flat()) v = rng.normal();
    }
    RealMatrix x(1, d);
    for (double& v : x.flat()) v = rng.normal();

    const RealMatrix out = multihead_attention(x, params, 2, /*causal=*/true);
    const RealMatrix expected = matmul(matmul(x, params.wv), params.wo);
    for (std::size_t j = 0; j < d; ++j)
        CHECK(std::fabs(out(0, j) - expected(0, j)) <= 1e-12);
}

TEST_CASE("two-token one-head attention matches hand-computed arithmetic") {
    AttentionParams params;
    params.wq = RealMatrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
    params.wk = RealMatrix::from_rows({{0.5, 0.0}, {0.0, 0.5}});
    params.wv = RealMatrix::from_rows({{1.0, 2.0}, {3.0, 4.0}});
    params.wo = RealMatrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
    const RealMatrix x = RealMatrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});

    // Hand arithmetic, scale 1/sqrt(2):
    //   q = x, k = x/2, v rows: v0 = (1,2), v1 = (3,4).
    //   Position 0 (causal): sees only itself -> v0.
    //   Position 1: scores (q1.k0, q1.k1)/sqrt2 = (0, 0.5/sqrt2); softmax ->
    //   p0 = 1/(1+e^s), p1 = e^s/(1+e^s) with s = 0.5/sqrt(2).
    const double s = 0.5 / std::sqrt(2.0);
    const double p1 = std::exp(s) / (1.0 + std::exp(s));
    const double p0 = 1.0 - p1;
    const RealMatrix out = multihead_attention(x, params, 1, /*causal=*/true);
    CHECK(std::fabs(out(0, 0) - 1.0) <= 1e-12);
    CHECK(std::fabs(out(0, 1) - 2.0) <= 1e-12);
    CHECK(std::fabs(out(1, 0) - (p0 * 1.0 + p1 * 3.0)) <= 1e-12);
    CHECK(std::fabs(out(1, 1) - (p0 * 2.0 + p1 * 4.0)) <= 1e-12);
}

TEST_CASE("causal masking gives prefix invariance under suffix edits") {
    const EncoderConfig cfg = small_suma(11);
    const EncoderWeights w = init_weights(cfg);
    Rng rng(13);
    std::vector<TokenId> tokens = arbitrary_tokens(rng, 9, cfg.vocab_size);
    const ActivationRecord before = forward(w, tokens);
    tokens.back() = (tokens.back() + 7) % static_cast<TokenId>(cfg.vocab_size);
    tokens[7] = (tokens[7] + 3) % static_cast<TokenId>(cfg.vocab_size);
    const ActivationRecord after = forward(w, tokens);
    for (std::size_t layer = 0; layer < before.layers; ++layer)
        for (std::size_t tap = 0; tap < before.taps; ++tap)
            for (std::size_t pos = 0; pos < 7; ++pos)
                for (std::size_t ch = 0; ch < before.d_model; ++ch)
                    CHECK(before.at(layer, tap, pos, ch) ==
                          doctest::Approx(after.at(layer, tap, pos, ch)).epsilon(1e-14));
}

TEST_CASE("mean-aggregated positionless non-causal encoders are permutation invariant") {
    EncoderConfig cfg = small_suma(17);
    cfg.causal = false;
    const EncoderWeights w = init_weights(cfg);
    Rng rng(19);
    std::vector<TokenId> tokens = arbitrary_tokens(rng, 12, cfg.vocab_size);
    const RealMatrix base = aggregate(forward(w, tokens), Aggregation::Mean);
    rng.shuffle(tokens);
    const RealMatrix permuted = aggregate(forward(w, tokens), Aggregation::Mean);
    for (std::size_t r = 0; r < base.rows(); ++r)
        for (std::size_t c = 0; c < base.cols(); ++c)
            CHECK(std::fabs(base(r, c) - permuted(r, c)) <= 1e-10);
}

TEST_CASE("suma records layers x taps x channels as configured") {
    const EncoderConfig cfg = small_suma(23);
    const EncoderWeights w = init_weights(cfg);
    const std::vector<TokenId> tokens{5, 6, 7};
    const ActivationRecord record = forward(w, tokens);
    CHECK(record.layers == 2);
    CHECK(record.taps == 2);
    CHECK(record.positions == 3);
    CHECK(record.d_model == 32);
    CHECK(record.unit_count() == 2 * 2 * 32);
}

TEST_CASE("embeddings-only ablation taps the embedded stream") {
    EncoderConfig cfg;
    cfg.d_model = 8;
    cfg.n_heads = 1;
    cfg.components = {};
    cfg.unroll_depth = 1;
    cfg.vocab_size = 50;
    cfg.seed = 3;
    const EncoderWeights w = init_weights(cfg);
    const std::vector<TokenId> tokens{7, 3, 7};
    const ActivationRecord record = forward(w, tokens);
    CHECK(record.layers == 1);
    CHECK(record.taps == 1);
    // The tap holds the raw embeddings; repeated ids repeat rows.
    for (std::size_t ch = 0; ch < 8; ++ch)
        CHECK(record.at(0, 0, 0, ch) == record.at(0, 0, 2, ch));
    // Token mixing never happens, so the mean aggregate is the bag of
    // embeddings and permutation invariance is exact.
    const RealMatrix mean = aggregate(record, Aggregation::Mean);
    const ActivationRecord permuted = forward(w, std::vector<TokenId>{3, 7, 7});
    const RealMatrix mean2 = aggregate(permuted, Aggregation::Mean);
    for (std::size_t ch = 0; ch < 8; ++ch)
        CHECK(mean(0, ch) == doctest::Approx(mean2(0, ch)).epsilon(1e-15));
}

TEST_CASE("adaptive depth is ceiling(tokens / 256)") {
    EncoderConfig cfg = small_suma(29);
    cfg.adaptive_depth = true;
    CHECK(resolve_depth(cfg, 300) == 2);
    CHECK(resolve_depth(cfg, 256) == 1);
    CHECK(resolve_depth(cfg, 1) == 1);
    CHECK(resolve_depth(cfg, 257) == 2);
    CHECK(resolve_depth(cfg, 513) == 3);

    cfg.shared_weights = false;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("forward is deterministic and validates token ids") {
    const EncoderConfig cfg = small_suma(31);
    const EncoderWeights w = init_weights(cfg);
    const std::vector<TokenId> tokens{1, 2, 3, 4};
    const ActivationRecord a = forward(w, tokens);
    const ActivationRecord b = forward(w, tokens);
    CHECK(a.data == b.data);

    const std::vector<TokenId> bad{1, static_cast<TokenId>(cfg.vocab_size)};
    CHECK_THROWS_AS(forward(w, bad), std::out_of_range);
    CHECK_THROWS_AS(forward(w, std::vector<TokenId>{}), std::invalid_argument);
}

TEST_CASE("shared-weight unrolling at depth 1 equals the single pass") {
    EncoderConfig deep = small_suma(37);
    deep.unroll_depth = 2;
    EncoderConfig shallow = deep;
    shallow.unroll_depth = 1;
    const EncoderWeights wd = init_weights(deep);
    const EncoderWeights ws = init_weights(shallow);
    const std::vector<TokenId> tokens{9, 8, 7, 6};
    const ActivationRecord rd = forward(wd, tokens);
    const ActivationRecord rs = forward(ws, tokens);
    // First pass of the deep record equals the full shallow record.
    for (std::size_t tap = 0; tap < rs.taps; ++tap)
        for (std::size_t pos = 0; pos < rs.positions; ++pos)
            for (std::size_t ch = 0; ch < rs.d_model; ++ch)
                CHECK(rd.at(0, tap, pos, ch) == rs.at(0, tap, pos, ch));
}

TEST_CASE("layer norm output has zero mean and unit variance before gain") {
    LayerNormParams params;
    params.gain.assign(64, 1.0);
    params.bias.assign(64, 0.0);
    Rng rng(41);
    RealMatrix x(5, 64);
    for (double& v : x.flat()) v = rng.normal(2.0, 3.0);
    const RealMatrix y = layer_norm(x, params);
    for (std::size_t i = 0; i < y.rows(); ++i) {
        double mean = 0.0;
        for (double v : y.row(i)) mean += v;
        mean /= 64.0;
        double var = 0.0;
        for (double v : y.row(i)) var += (v - mean) * (v - mean);
        var /= 64.0;
        CHECK(std::fabs(mean) <= 1e-10);
        CHECK(std::fabs(var - 1.0) <= 1e-6);
    }
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(43);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> row(1 + rng.below(20));
        for (double& v : row) v = rng.normal(0.0, 5.0);
        softmax_in_place(row);
        const double sum = std::accumulate(row.begin(), row.end(), 0.0);
        CHECK(std::fabs(sum - 1.0) <= 1e-12);
    }
}

TEST_CASE("aggregation fixtures") {
    ActivationRecord record;
    record.layers = 1;
    record.taps = 1;
    record.positions = 3;
    record.d_model = 2;
    record.data = {1.0, 10.0, 2.0, 20.0, 3.0, 30.0};
    const RealMatrix mean = aggregate(record, Aggregation::Mean);
    CHECK(mean(0, 0) == doctest::Approx(2.0));
    CHECK(mean(0, 1) == doctest::Approx(20.0));
    const RealMatrix last = aggregate(record, Aggregation::LastToken);
    CHECK(last(0, 0) == 3.0);
    CHECK(last(0, 1) == 30.0);

    // Single-position records make both modes identical.
    ActivationRecord single;
    single.layers = 1;
    single.taps = 1;
    single.positions = 1;
    single.d_model = 2;
    single.data = {4.0, 5.0};
    CHECK(aggregate(single, Aggregation::Mean) == aggregate(single, Aggregation::LastToken));
}

TEST_CASE("flops fixtures") {
    // One d=2 linear layer on 1 token: 2 * 1 * 2 * 2 = 8.
    CHECK(dense_flops(1, 2, 2) == 8);
    // A single 4096 x 4096 projection on one token ~ 33.55 MFLOPs.
    CHECK(dense_flops(1, 4096, 4096) == 33554432ull);

    // An MLP component counts both its in and out projections.
    EncoderConfig tiny;
    tiny.d_model = 2;
    tiny.n_heads = 1;
    tiny.components = {Component::MLP};
    tiny.mlp_hidden = 2;
    tiny.unroll_depth = 1;
    tiny.vocab_size = 4;
    CHECK(flops_estimate(tiny, 1) == 16);

    // Full-scale SUMA (d=4096, 512 heads, two shared passes) costs ~268
    // MFLOPs per token: 2 passes x (4 projections + scores and mixing).
    EncoderConfig full_suma = EncoderConfig::suma(4096, 512, 32000, 0);
    const double mflops = static_cast<double>(flops_estimate(full_suma, 1)) / 1e6;
    CHECK(std::fabs(mflops - 268.0) < 1.0);
}

TEST_CASE("config round-trips through the key-value format") {
    EncoderConfig cfg = small_suma(47);
    cfg.positional_encoding = true;
    cfg.adaptive_depth = true;
    cfg.unroll_depth = 1;
    const EncoderConfig back = EncoderConfig::from_kv(cfg.to_kv());
    CHECK(back.to_kv() == cfg.to_kv());
    CHECK(back.content_hash() == cfg.content_hash());

    EncoderConfig other = small_suma(48);
    CHECK(other.content_hash() != cfg.content_hash());
}

TEST_CASE("hashed embeddings are deterministic per id") {
    EncoderConfig cfg = small_suma(53);
    cfg.hashed_embeddings = true;
    const EncoderWeights w = init_weights(cfg);
    const std::vector<double> a = w.embedding_row(0x12345678u);
    const std::vector<double> b = w.embedding_row(0x12345678u);
    const std::vector<double> c = w.embedding_row(0x12345679u);
    CHECK(a == b);
    CHECK(a != c);
}

TEST_CASE("activation record export writes binary plus sidecar") {
    const EncoderConfig cfg = small_suma(59);
    const EncoderWeights w = init_weights(cfg);
    const ActivationRecord record = forward(w, std::vector<TokenId>{1, 2, 3});
    const auto dir = std::filesystem::temp_directory_path() / "suma_record_test";
    std::filesystem::create_directories(dir);
    record.export_binary(dir / "rec");
    const auto values = read_doubles_binary(dir / "rec.bin");
    CHECK(values.size() == record.data.size());
    CHECK(values == record.data);
    const std::string sidecar = read_text_file(dir / "rec.json");
    CHECK(sidecar.find("\"layers\": 2") != std::string::npos);
    std::filesystem::remove_all(dir);
}
