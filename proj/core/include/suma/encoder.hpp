#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "suma/io.hpp"
#include "suma/matrix.hpp"
#include "suma/tokenizer.hpp"

namespace suma {

/// The four tap points of a block, in architecture order.
enum class Component { LN1, ATTN, LN2, MLP };

enum class Aggregation { LastToken, Mean };

struct EncoderConfig {
    std::size_t d_model = 64;
    std::size_t n_heads = 8;
    std::size_t unroll_depth = 2;
    bool adaptive_depth = false;  // ceil(tokens / 256) passes; needs shared weights
    std::vector<Component> components{Component::LN1, Component::ATTN};
    bool positional_encoding = false;
    Aggregation aggregation = Aggregation::Mean;
    bool shared_weights = true;
    std::size_t mlp_hidden = 256;
    std::uint64_t vocab_size = Vocab::kBaseSize;
    bool hashed_embeddings = false;  // open-vocabulary (word tokenizer) mode
    bool causal = true;
    std::size_t max_positions = 512;
    std::uint64_t seed = 0;

    void validate() const;
    /// One tap per configured component; the embeddings-only ablation (no
    /// components) taps the embedded stream itself.
    std::size_t taps_per_layer() const { return components.empty() ? 1 : components.size(); }

    /// The shallow untrained multihead-attention preset: embeddings through
    /// LN1 + attention, two passes of shared weights, mean aggregation.
    static EncoderConfig suma(std::size_t d_model, std::size_t n_heads,
                              std::uint64_t vocab_size, std::uint64_t seed);

    KvMap to_kv() const;
    static EncoderConfig from_kv(const KvMap& kv);
    /// FNV hash of the canonical serialization; used in mask headers and
    /// localization caching.
    std::uint64_t content_hash() const;
};

struct LayerNormParams {
    std::vector<double> gain;
    std::vector<double> bias;
};

struct AttentionParams {
    RealMatrix wq, wk, wv, wo;  // d x d, no projection biases
};

struct MlpParams {
    RealMatrix w_in, w_out;  // d x hidden, hidden x d
};

struct BlockParams {
    LayerNormParams ln1, ln2;
    AttentionParams attn;
    MlpParams mlp;
};

struct EncoderWeights {
    EncoderConfig config;
    RealMatrix embeddings;         // vocab x d; empty in hashed mode
    RealMatrix positional;         // max_positions x d when enabled
    std::vector<BlockParams> blocks;  // one entry when weights are shared

    /// Embedding for a token id: a table row, or a vector derived
    /// deterministically from (seed, id) in hashed mode.
    std::vector<double> embedding_row(TokenId id) const;
};

/// Draws all projections and embeddings i.i.d. normal(0, 0.02); layer-norm
/// gains start at 1 and biases at 0. Fully determined by config.seed.
EncoderWeights init_weights(const EncoderConfig& config);

/// Activations of every tap of every pass at every token position, laid out
/// (layer, tap, position, channel) row-major.
struct ActivationRecord {
    std::size_t layers = 0, taps = 0, positions = 0, d_model = 0;
    std::vector<double> data;

    double at(std::size_t layer, std::size_t tap, std::size_t pos, std::size_t ch) const {
        return data[((layer * taps + tap) * positions + pos) * d_model + ch];
    }
    std::size_t unit_count() const { return layers * taps * d_model; }

    /// Writes <base>.bin (flat 64-bit reals) plus a <base>.json sidecar
    /// describing the layout.
    void export_binary(const std::filesystem::path& base) const;
};

std::size_t resolve_depth(const EncoderConfig& config, std::size_t n_tokens);

/// Runs the configured component chain over the embedded tokens, recording
/// every tap of every pass. When final_hidden is given it receives the
/// residual-stream output after the last pass (the module's output proper).
ActivationRecord forward(const EncoderWeights& weights, std::span<const TokenId> tokens,
                         RealMatrix* final_hidden = nullptr);

/// Per-tap aggregated vectors: row (layer * taps + tap), column channel.
RealMatrix aggregate(const ActivationRecord& record, Aggregation mode);

/// Aggregation restricted to positions [begin, end) — the current stimulus's
/// span when earlier stimuli were prepended as context.
RealMatrix aggregate_span(const ActivationRecord& record, Aggregation mode, std::size_t begin,
                          std::size_t end);

RealMatrix multihead_attention(const RealMatrix& x, const AttentionParams& params,
                               std::size_t n_heads, bool causal);

/// (x - mean) / sqrt(var + 1e-10) per row, then gain and bias.
RealMatrix layer_norm(const RealMatrix& x, const LayerNormParams& params);

void softmax_in_place(std::span<double> logits);

/// Cost of one dense (m x n) * (n x k) product.
inline std::uint64_t dense_flops(std::uint64_t m, std::uint64_t n, std::uint64_t k) {
    return 2 * m * n * k;
}

/// 2*m*n*k per dense product, summed over the configured components for one
/// sequence of seq_len tokens, times the number of passes. Embedding lookups
/// are free; attention score and mixing products are counted.
std::uint64_t flops_estimate(const EncoderConfig& config, std::size_t seq_len);

}  // namespace suma
