#include "suma/encoder.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "suma/rng.hpp"

namespace suma {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kLnEps = 1e-10;

// Weight-stream ids so each parameter group owns an independent substream.
constexpr std::uint64_t kEmbeddingStream = 1;
constexpr std::uint64_t kPositionalStream = 2;
constexpr std::uint64_t kBlockStreamBase = 16;

using EigenRowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const EigenRowMajor>;
using MutMap = Eigen::Map<EigenRowMajor>;

const char* component_name(Component c) {
    switch (c) {
        case Component::LN1: return "LN1";
        case Component::ATTN: return "ATTN";
        case Component::LN2: return "LN2";
        case Component::MLP: return "MLP";
    }
    return "?";
}

Component component_from_name(std::string_view name) {
    if (name == "LN1") return Component::LN1;
    if (name == "ATTN") return Component::ATTN;
    if (name == "LN2") return Component::LN2;
    if (name == "MLP") return Component::MLP;
    throw std::invalid_argument("unknown component: " + std::string(name));
}

RealMatrix random_matrix(Rng rng, std::size_t rows, std::size_t cols) {
    RealMatrix m(rows, cols);
    for (double& v : m.flat()) v = rng.normal(0.0, kInitStd);
    return m;
}

bool has_component(const EncoderConfig& config, Component c) {
    return std::find(config.components.begin(), config.components.end(), c) !=
           config.components.end();
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

}  // namespace

void EncoderConfig::validate() const {
    if (d_model == 0) throw std::invalid_argument("EncoderConfig: d_model must be positive");
    if (components.empty() && unroll_depth > 1)
        throw std::invalid_argument("EncoderConfig: empty component chain cannot unroll");
    if (has_component(*this, Component::ATTN)) {
        if (n_heads == 0 || d_model % n_heads != 0)
            throw std::invalid_argument("EncoderConfig: n_heads must divide d_model");
    }
    if (adaptive_depth && !shared_weights)
        throw std::invalid_argument("EncoderConfig: adaptive depth requires shared weights");
    if (!adaptive_depth && unroll_depth == 0)
        throw std::invalid_argument("EncoderConfig: unroll_depth must be >= 1");
    // Components must be a subset of the canonical chain, in chain order.
    int last = -1;
    for (Component c : components) {
        const int idx = static_cast<int>(c);
        if (idx <= last)
            throw std::invalid_argument("EncoderConfig: components out of order or duplicated");
        last = idx;
    }
    if (has_component(*this, Component::MLP) && mlp_hidden == 0)
        throw std::invalid_argument("EncoderConfig: mlp_hidden must be positive with MLP");
    if (!hashed_embeddings && vocab_size == 0)
        throw std::invalid_argument("EncoderConfig: vocab_size must be positive");
}

EncoderConfig EncoderConfig::suma(std::size_t d_model, std::size_t n_heads,
                                  std::uint64_t vocab_size, std::uint64_t seed) {
    EncoderConfig cfg;
    cfg.d_model = d_model;
    cfg.n_heads = n_heads;
    cfg.components = {Component::LN1, Component::ATTN};
    cfg.unroll_depth = 2;
    cfg.shared_weights = true;
    cfg.positional_encoding = false;
    cfg.aggregation = Aggregation::Mean;
    cfg.vocab_size = vocab_size;
    cfg.seed = seed;
    return cfg;
}

KvMap EncoderConfig::to_kv() const {
    KvMap kv;
    kv["d_model"] = std::to_string(d_model);
    kv["n_heads"] = std::to_string(n_heads);
    kv["unroll_depth"] = adaptive_depth ? "adaptive" : std::to_string(unroll_depth);
    std::string comps;
    for (Component c : components) {
        if (!comps.empty()) comps += ',';
        comps += component_name(c);
    }
    kv["components"] = comps;
    kv["positional_encoding"] = positional_encoding ? "true" : "false";
    kv["aggregation"] = aggregation == Aggregation::Mean ? "mean" : "last_token";
    kv["shared_weights"] = shared_weights ? "true" : "false";
    kv["mlp_hidden"] = std::to_string(mlp_hidden);
    kv["vocab_size"] = std::to_string(vocab_size);
    kv["hashed_embeddings"] = hashed_embeddings ? "true" : "false";
    kv["causal"] = causal ? "true" : "false";
    kv["max_positions"] = std::to_string(max_positions);
    kv["seed"] = std::to_string(seed);
    return kv;
}

EncoderConfig EncoderConfig::from_kv(const KvMap& kv) {
    EncoderConfig cfg;
    const auto get = [&kv](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw std::invalid_argument("encoder config missing key: " + key);
        return it->second;
    };
    const auto get_bool = [&get](const std::string& key) {
        const std::string& v = get(key);
        if (v == "true") return true;
        if (v == "false") return false;
        throw std::invalid_argument("encoder config: expected true/false for " + key);
    };
    cfg.d_model = std::stoull(get("d_model"));
    cfg.n_heads = std::stoull(get("n_heads"));
    if (get("unroll_depth") == "adaptive") {
        cfg.adaptive_depth = true;
        cfg.unroll_depth = 1;
    } else {
        cfg.unroll_depth = std::stoull(get("unroll_depth"));
    }
    cfg.components.clear();
    const std::string& comps = get("components");
    std::size_t pos = 0;
    while (pos < comps.size()) {
        std::size_t comma = comps.find(',', pos);
        if (comma == std::string::npos) comma = comps.size();
        if (comma > pos)
            cfg.components.push_back(component_from_name(comps.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    cfg.positional_encoding = get_bool("positional_encoding");
    cfg.aggregation =
        get("aggregation") == "mean" ? Aggregation::Mean : Aggregation::LastToken;
    cfg.shared_weights = get_bool("shared_weights");
    cfg.mlp_hidden = std::stoull(get("mlp_hidden"));
    cfg.vocab_size = std::stoull(get("vocab_size"));
    cfg.hashed_embeddings = get_bool("hashed_embeddings");
    cfg.causal = get_bool("causal");
    cfg.max_positions = std::stoull(get("max_positions"));
    cfg.seed = std::stoull(get("seed"));
    cfg.validate();
    return cfg;
}

std::uint64_t EncoderConfig::content_hash() const { return fnv1a64(format_kv(to_kv())); }

std::vector<double> EncoderWeights::embedding_row(TokenId id) const {
    std::vector<double> row(config.d_model);
    if (config.hashed_embeddings) {
        Rng rng(hash_mix(hash_mix(config.seed, kEmbeddingStream), id));
        for (double& v : row) v = rng.normal(0.0, kInitStd);
        return row;
    }
    if (id >= embeddings.rows())
        throw std::out_of_range("encoder: token id out of vocab range");
    const auto src = embeddings.row(id);
    std::copy(src.begin(), src.end(), row.begin());
    return row;
}

EncoderWeights init_weights(const EncoderConfig& config) {
    config.validate();
    EncoderWeights w;
    w.config = config;
    const Rng root(config.seed);
    const std::size_t d = config.d_model;

    if (!config.hashed_embeddings)
        w.embeddings = random_matrix(root.fork(kEmbeddingStream),
                                     static_cast<std::size_t>(config.vocab_size), d);
    if (config.positional_encoding)
        w.positional = random_matrix(root.fork(kPositionalStream), config.max_positions, d);

    const std::size_t n_blocks = config.shared_weights ? 1 : config.unroll_depth;
    for (std::size_t b = 0; b < n_blocks; ++b) {
        const Rng block_rng = root.fork(kBlockStreamBase + b);
        BlockParams params;
        params.ln1.gain.assign(d, 1.0);
        params.ln1.bias.assign(d, 0.0);
        params.ln2.gain.assign(d, 1.0);
        params.ln2.bias.assign(d, 0.0);
        if (has_component(config, Component::ATTN)) {
            params.attn.wq = random_matrix(block_rng.fork(0), d, d);
            params.attn.wk = random_matrix(block_rng.fork(1), d, d);
            params.attn.wv = random_matrix(block_rng.fork(2), d, d);
            params.attn.wo = random_matrix(block_rng.fork(3), d, d);
        }
        if (has_component(config, Component::MLP)) {
            params.mlp.w_in = random_matrix(block_rng.fork(4), d, config.mlp_hidden);
            params.mlp.w_out = random_matrix(block_rng.fork(5), config.mlp_hidden, d);
        }
        w.blocks.push_back(std::move(params));
    }
    return w;
}

void softmax_in_place(std::span<double> logits) {
    if (logits.empty()) return;
    const double max = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double& v : logits) {
        v = std::exp(v - max);
        sum += v;
    }
    for (double& v : logits) v /= sum;
}

RealMatrix layer_norm(const RealMatrix& x, const LayerNormParams& params) {
    RealMatrix out(x.rows(), x.cols());
    const double d = static_cast<double>(x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double mean = 0.0;
        for (double v : x.row(i)) mean += v;
        mean /= d;
        double var = 0.0;
        for (double v : x.row(i)) var += (v - mean) * (v - mean);
        var /= d;
        const double inv = 1.0 / std::sqrt(var + kLnEps);
        for (std::size_t j = 0; j < x.cols(); ++j)
            out(i, j) = (x(i, j) - mean) * inv * params.gain[j] + params.bias[j];
    }
    return out;
}

RealMatrix multihead_attention(const RealMatrix& x, const AttentionParams& params,
                               std::size_t n_heads, bool causal) {
    const std::size_t seq = x.rows();
    const std::size_t d = x.cols();
    if (params.wq.rows() != d || params.wq.cols() != d || params.wk.rows() != d ||
        params.wv.rows() != d || params.wo.rows() != d)
        throw std::invalid_argument("multihead_attention: projection shape mismatch");
    if (n_heads == 0 || d % n_heads != 0)
        throw std::invalid_argument("multihead_attention: n_heads must divide d_model");
    const std::size_t dh = d / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    const RealMatrix q = matmul(x, params.wq);
    const RealMatrix k = matmul(x, params.wk);
    const RealMatrix v = matmul(x, params.wv);

    RealMatrix mixed(seq, d);
    ConstMap mq(q.data(), static_cast<Eigen::Index>(seq), static_cast<Eigen::Index>(d));
    ConstMap mk(k.data(), static_cast<Eigen::Index>(seq), static_cast<Eigen::Index>(d));
    ConstMap mv(v.data(), static_cast<Eigen::Index>(seq), static_cast<Eigen::Index>(d));
    MutMap mo(mixed.data(), static_cast<Eigen::Index>(seq), static_cast<Eigen::Index>(d));

    std::vector<double> row;
    for (std::size_t h = 0; h < n_heads; ++h) {
        const auto offset = static_cast<Eigen::Index>(h * dh);
        const auto width = static_cast<Eigen::Index>(dh);
        const EigenRowMajor scores =
            mq.middleCols(offset, width) * mk.middleCols(offset, width).transpose() * scale;
        for (std::size_t i = 0; i < seq; ++i) {
            const std::size_t visible = causal ? i + 1 : seq;
            row.assign(scores.row(static_cast<Eigen::Index>(i)).data(),
                       scores.row(static_cast<Eigen::Index>(i)).data() + visible);
            softmax_in_place(row);
            Eigen::Map<const Eigen::RowVectorXd> probs(row.data(),
                                                       static_cast<Eigen::Index>(visible));
            mo.row(static_cast<Eigen::Index>(i)).segment(offset, width) =
                probs * mv.middleCols(offset, width).topRows(static_cast<Eigen::Index>(visible));
        }
    }
    return matmul(mixed, params.wo);
}

std::size_t resolve_depth(const EncoderConfig& config, std::size_t n_tokens) {
    if (!config.adaptive_depth) return config.unroll_depth;
    return (n_tokens + 255) / 256;
}

ActivationRecord forward(const EncoderWeights& weights, std::span<const TokenId> tokens,
                         RealMatrix* final_hidden) {
    const EncoderConfig& config = weights.config;
    if (tokens.empty()) throw std::invalid_argument("forward: empty token sequence");
    const std::size_t seq = tokens.size();
    const std::size_t d = config.d_model;

    RealMatrix x(seq, d);
    for (std::size_t p = 0; p < seq; ++p) {
        const std::vector<double> row = weights.embedding_row(tokens[p]);
        std::copy(row.begin(), row.end(), x.row(p).begin());
    }
    if (config.positional_encoding) {
        if (seq > config.max_positions)
            throw std::invalid_argument("forward: sequence exceeds positional table");
        for (std::size_t p = 0; p < seq; ++p)
            for (std::size_t j = 0; j < d; ++j) x(p, j) += weights.positional(p, j);
    }

    const std::size_t passes = resolve_depth(config, seq);
    ActivationRecord record;
    record.layers = passes;
    record.taps = config.taps_per_layer();
    record.positions = seq;
    record.d_model = d;
    record.data.resize(passes * record.taps * seq * d);

    const bool attn_present = has_component(config, Component::ATTN);
    const bool mlp_present = has_component(config, Component::MLP);
    const bool ln1_present = has_component(config, Component::LN1);
    const bool ln2_present = has_component(config, Component::LN2);

    const auto record_tap = [&](std::size_t layer, std::size_t tap, const RealMatrix& m) {
        const std::size_t base = (layer * record.taps + tap) * seq * d;
        std::copy(m.flat().begin(), m.flat().end(), record.data.begin() + base);
    };

    if (config.components.empty()) {
        // Embeddings-only ablation: the embedded stream is the single tap.
        record_tap(0, 0, x);
        if (final_hidden) *final_hidden = std::move(x);
        return record;
    }

    for (std::size_t layer = 0; layer < passes; ++layer) {
        const BlockParams& params =
            weights.blocks[config.shared_weights ? 0 : layer];
        RealMatrix ln1_out, ln2_out;
        std::size_t tap = 0;
        for (Component c : config.components) {
            switch (c) {
                case Component::LN1: {
                    ln1_out = layer_norm(x, params.ln1);
                    record_tap(layer, tap, ln1_out);
                    if (!attn_present) x = ln1_out;
                    break;
                }
                case Component::ATTN: {
                    const RealMatrix& input = ln1_present ? ln1_out : x;
                    const RealMatrix attn_out =
                        multihead_attention(input, params.attn, config.n_heads, config.causal);
                    record_tap(layer, tap, attn_out);
                    for (std::size_t i = 0; i < seq; ++i)
                        for (std::size_t j = 0; j < d; ++j) x(i, j) += attn_out(i, j);
                    break;
                }
                case Component::LN2: {
                    ln2_out = layer_norm(x, params.ln2);
                    record_tap(layer, tap, ln2_out);
                    if (!mlp_present) x = ln2_out;
                    break;
                }
                case Component::MLP: {
                    const RealMatrix& input = ln2_present ? ln2_out : x;
                    RealMatrix hidden = matmul(input, params.mlp.w_in);
                    for (double& v : hidden.flat()) v = silu(v);
                    const RealMatrix mlp_out = matmul(hidden, params.mlp.w_out);
                    record_tap(layer, tap, mlp_out);
                    for (std::size_t i = 0; i < seq; ++i)
                        for (std::size_t j = 0; j < d; ++j) x(i, j) += mlp_out(i, j);
                    break;
                }
            }
            ++tap;
        }
    }
    if (final_hidden) *final_hidden = std::move(x);
    return record;
}

RealMatrix aggregate(const ActivationRecord& record, Aggregation mode) {
    return aggregate_span(record, mode, 0, record.positions);
}

RealMatrix aggregate_span(const ActivationRecord& record, Aggregation mode, std::size_t begin,
                          std::size_t end) {
    if (begin >= end || end > record.positions)
        throw std::invalid_argument("aggregate_span: bad position range");
    RealMatrix out(record.layers * record.taps, record.d_model);
    for (std::size_t layer = 0; layer < record.layers; ++layer) {
        for (std::size_t tap = 0; tap < record.taps; ++tap) {
            const std::size_t row = layer * record.taps + tap;
            if (mode == Aggregation::LastToken) {
                for (std::size_t ch = 0; ch < record.d_model; ++ch)
                    out(row, ch) = record.at(layer, tap, end - 1, ch);
            } else {
                const double n = static_cast<double>(end - begin);
                for (std::size_t pos = begin; pos < end; ++pos)
                    for (std::size_t ch = 0; ch < record.d_model; ++ch)
                        out(row, ch) += record.at(layer, tap, pos, ch);
                for (std::size_t ch = 0; ch < record.d_model; ++ch) out(row, ch) /= n;
            }
        }
    }
    return out;
}

std::uint64_t flops_estimate(const EncoderConfig& config, std::size_t seq_len) {
    config.validate();
    const std::uint64_t seq = seq_len;
    const std::uint64_t d = config.d_model;
    std::uint64_t per_pass = 0;
    for (Component c : config.components) {
        switch (c) {
            case Component::LN1:
            case Component::LN2:
                break;  // no dense products
            case Component::ATTN:
                per_pass += 4 * dense_flops(seq, d, d);    // Q, K, V, O projections
                per_pass += 2 * dense_flops(seq, d, seq);  // scores + mixing across heads
                break;
            case Component::MLP:
                per_pass += dense_flops(seq, d, config.mlp_hidden);
                per_pass += dense_flops(seq, config.mlp_hidden, d);
                break;
        }
    }
    return per_pass * resolve_depth(config, seq_len);
}

void ActivationRecord::export_binary(const std::filesystem::path& base) const {
    std::filesystem::path bin = base;
    bin += ".bin";
    write_doubles_binary(bin, data);
    nlohmann::json sidecar{{"layers", layers},
                           {"taps", taps},
                           {"positions", positions},
                           {"d_model", d_model},
                           {"order", "layer,tap,position,channel"},
                           {"dtype", "float64"}};
    std::filesystem::path meta = base;
    meta += ".json";
    write_text_file(meta, sidecar.dump(2) + "\n");
}

}  // namespace suma
