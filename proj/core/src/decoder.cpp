#include "suma/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "suma/io.hpp"
#include "suma/stats.hpp"

namespace suma {

using autodiff::NodeId;
using autodiff::Parameter;
using autodiff::Tape;

namespace {

constexpr double kInitStd = 0.02;

RealMatrix random_matrix(Rng rng, std::size_t rows, std::size_t cols, double sd) {
    RealMatrix m(rows, cols);
    for (double& v : m.flat()) v = rng.normal(0.0, sd);
    return m;
}

RealMatrix row_vector(std::size_t n, double fill) { return RealMatrix(1, n, fill); }

struct Chunk {
    std::size_t begin = 0;  // first input token in the stream
    std::size_t length = 0; // number of predicted tokens
};

/// Non-overlapping prediction windows: chunk c inputs stream[s .. s+L-1] and
/// predicts stream[s+1 .. s+L]; consecutive chunks share one boundary token
/// so every token after the first gets exactly one loss.
std::vector<Chunk> make_chunks(std::size_t stream_len, std::size_t context_tokens) {
    std::vector<Chunk> chunks;
    if (stream_len < 2) return chunks;
    std::size_t pos = 0;
    while (pos + 1 < stream_len) {
        const std::size_t length = std::min(context_tokens, stream_len - 1 - pos);
        chunks.push_back({pos, length});
        pos += length;
    }
    return chunks;
}

class Adam {
public:
    Adam(std::span<Parameter* const> params, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const Parameter* p : params) {
            m_.emplace_back(p->value.rows(), p->value.cols());
            v_.emplace_back(p->value.rows(), p->value.cols());
        }
    }

    void step(std::span<Parameter* const> params, double lr, double grad_scale) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            Parameter& p = *params[i];
            for (std::size_t j = 0; j < p.value.size(); ++j) {
                const double g = p.grad.flat()[j] * grad_scale;
                double& m = m_[i].flat()[j];
                double& v = v_[i].flat()[j];
                m = beta1_ * m + (1.0 - beta1_) * g;
                v = beta2_ * v + (1.0 - beta2_) * g * g;
                p.value.flat()[j] -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps_);
            }
        }
    }

private:
    double beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<RealMatrix> m_, v_;
};

}  // namespace

std::string input_source_name(InputSource s) {
    switch (s) {
        case InputSource::Embeddings: return "embeddings";
        case InputSource::FinalLayer: return "final_layer";
        case InputSource::LocalizedUnits: return "localized_units";
    }
    return "?";
}

InputSource input_source_from_name(std::string_view name) {
    if (name == "embeddings") return InputSource::Embeddings;
    if (name == "final_layer") return InputSource::FinalLayer;
    if (name == "localized_units") return InputSource::LocalizedUnits;
    throw std::invalid_argument("unknown input source: " + std::string(name));
}

void DecoderConfig::validate() const {
    if (n_blocks != 1 && n_blocks != 2)
        throw std::invalid_argument("DecoderConfig: n_blocks must be 1 or 2");
    if (n_heads == 0 || d_model % n_heads != 0)
        throw std::invalid_argument("DecoderConfig: n_heads must divide d_model");
    if (vocab_size == 0) throw std::invalid_argument("DecoderConfig: vocab_size required");
    if (context_length == 0) throw std::invalid_argument("DecoderConfig: context_length required");
    if (mlp_hidden == 0) throw std::invalid_argument("DecoderConfig: mlp_hidden required");
}

KvMap DecoderConfig::to_kv() const {
    KvMap kv;
    kv["n_blocks"] = std::to_string(n_blocks);
    kv["d_model"] = std::to_string(d_model);
    kv["n_heads"] = std::to_string(n_heads);
    kv["mlp_hidden"] = std::to_string(mlp_hidden);
    kv["vocab_size"] = std::to_string(vocab_size);
    kv["context_length"] = std::to_string(context_length);
    kv["input_source"] = input_source_name(input_source);
    kv["seed"] = std::to_string(seed);
    return kv;
}

DecoderConfig DecoderConfig::from_kv(const KvMap& kv) {
    DecoderConfig cfg;
    cfg.n_blocks = std::stoull(kv.at("n_blocks"));
    cfg.d_model = std::stoull(kv.at("d_model"));
    cfg.n_heads = std::stoull(kv.at("n_heads"));
    cfg.mlp_hidden = std::stoull(kv.at("mlp_hidden"));
    cfg.vocab_size = std::stoull(kv.at("vocab_size"));
    cfg.context_length = std::stoull(kv.at("context_length"));
    cfg.input_source = input_source_from_name(kv.at("input_source"));
    cfg.seed = std::stoull(kv.at("seed"));
    cfg.validate();
    return cfg;
}

FeatureProvider::FeatureProvider(InputSource source, const EncoderWeights* encoder,
                                 const UnitMask* mask)
    : source_(source), encoder_(encoder), mask_(mask) {
    if (!encoder_) throw std::invalid_argument("FeatureProvider: encoder required");
    if (source_ == InputSource::LocalizedUnits && (!mask_ || mask_->k() == 0))
        throw std::invalid_argument("FeatureProvider: localized_units needs a unit mask");
    if (source_ != InputSource::Embeddings && !encoder_->config.causal)
        throw std::invalid_argument(
            "FeatureProvider: encoder must be causal for per-position language-model inputs");
}

std::size_t FeatureProvider::feature_dim() const {
    switch (source_) {
        case InputSource::Embeddings:
        case InputSource::FinalLayer: return encoder_->config.d_model;
        case InputSource::LocalizedUnits: return mask_->k();
    }
    return 0;
}

RealMatrix FeatureProvider::features_for(std::span<const TokenId> ids) const {
    const std::size_t seq = ids.size();
    RealMatrix features(seq, feature_dim());
    if (source_ == InputSource::Embeddings) {
        for (std::size_t p = 0; p < seq; ++p) {
            const std::vector<double> row = encoder_->embedding_row(ids[p]);
            std::copy(row.begin(), row.end(), features.row(p).begin());
        }
        return features;
    }
    RealMatrix final_hidden;
    const ActivationRecord record = forward(*encoder_, ids, &final_hidden);
    if (source_ == InputSource::FinalLayer) return final_hidden;
    for (std::size_t p = 0; p < seq; ++p) {
        std::size_t col = 0;
        for (const auto& e : mask_->entries) {
            if (e.coord.layer >= record.layers || e.coord.tap >= record.taps ||
                e.coord.channel >= record.d_model)
                throw std::out_of_range("FeatureProvider: mask outside record shape");
            features(p, col++) = record.at(e.coord.layer, e.coord.tap, p, e.coord.channel);
        }
    }
    return features;
}

DecoderModel::DecoderModel(const DecoderConfig& config, std::size_t feature_dim)
    : config_(config), feature_dim_(feature_dim) {
    config_.validate();
    if (feature_dim_ == 0) throw std::invalid_argument("DecoderModel: feature_dim required");
    const Rng root(config_.seed);
    const std::size_t d = config_.d_model;

    if (feature_dim_ != d) {
        // Frozen random projection keeps trainable counts matched across
        // input variants; variance-preserving scale.
        input_projection_ = random_matrix(root.fork(1), feature_dim_, d,
                                          1.0 / std::sqrt(static_cast<double>(feature_dim_)));
    }
    pos_table_ = Parameter("pos_table",
                           random_matrix(root.fork(2), config_.context_length, d, kInitStd));
    for (std::size_t b = 0; b < config_.n_blocks; ++b) {
        const Rng rb = root.fork(16 + b);
        Block block;
        const std::string prefix = "block" + std::to_string(b) + ".";
        block.ln1_gain = Parameter(prefix + "ln1.gain", row_vector(d, 1.0));
        block.ln1_bias = Parameter(prefix + "ln1.bias", row_vector(d, 0.0));
        block.wq = Parameter(prefix + "wq", random_matrix(rb.fork(0), d, d, kInitStd));
        block.wk = Parameter(prefix + "wk", random_matrix(rb.fork(1), d, d, kInitStd));
        block.wv = Parameter(prefix + "wv", random_matrix(rb.fork(2), d, d, kInitStd));
        block.wo = Parameter(prefix + "wo", random_matrix(rb.fork(3), d, d, kInitStd));
        block.ln2_gain = Parameter(prefix + "ln2.gain", row_vector(d, 1.0));
        block.ln2_bias = Parameter(prefix + "ln2.bias", row_vector(d, 0.0));
        block.w_in =
            Parameter(prefix + "mlp.w_in", random_matrix(rb.fork(4), d, config_.mlp_hidden, kInitStd));
        block.w_out = Parameter(prefix + "mlp.w_out",
                                random_matrix(rb.fork(5), config_.mlp_hidden, d, kInitStd));
        blocks_.push_back(std::move(block));
    }
    final_ln_gain_ = Parameter("final_ln.gain", row_vector(d, 1.0));
    final_ln_bias_ = Parameter("final_ln.bias", row_vector(d, 0.0));
    lm_head_ = Parameter("lm_head",
                         random_matrix(root.fork(3), d, config_.vocab_size, kInitStd));
}

std::vector<Parameter*> DecoderModel::trainable() {
    std::vector<Parameter*> out{&pos_table_};
    for (Block& b : blocks_) {
        out.push_back(&b.ln1_gain);
        out.push_back(&b.ln1_bias);
        out.push_back(&b.wq);
        out.push_back(&b.wk);
        out.push_back(&b.wv);
        out.push_back(&b.wo);
        out.push_back(&b.ln2_gain);
        out.push_back(&b.ln2_bias);
        out.push_back(&b.w_in);
        out.push_back(&b.w_out);
    }
    out.push_back(&final_ln_gain_);
    out.push_back(&final_ln_bias_);
    out.push_back(&lm_head_);
    return out;
}

std::vector<const Parameter*> DecoderModel::trainable() const {
    auto mutable_list = const_cast<DecoderModel*>(this)->trainable();
    return {mutable_list.begin(), mutable_list.end()};
}

std::size_t DecoderModel::trainable_count() const {
    std::size_t total = 0;
    for (const Parameter* p : trainable()) total += p->value.size();
    return total;
}

NodeId DecoderModel::build_graph(Tape& tape, const RealMatrix& features, bool with_params) {
    if (features.cols() != feature_dim_)
        throw std::invalid_argument("DecoderModel: feature width mismatch");
    if (features.rows() > config_.context_length)
        throw std::invalid_argument("DecoderModel: sequence exceeds context_length");

    const auto wrap = [&](Parameter& p) {
        return with_params ? tape.parameter(p) : tape.constant(p.value);
    };

    NodeId x = tape.constant(features);
    if (!input_projection_.empty()) x = tape.matmul(x, tape.constant(input_projection_));
    x = tape.add_position_rows(x, wrap(pos_table_));
    for (Block& b : blocks_) {
        const NodeId normed1 = tape.layer_norm(x, wrap(b.ln1_gain), wrap(b.ln1_bias));
        const NodeId attn = tape.attention(normed1, wrap(b.wq), wrap(b.wk), wrap(b.wv),
                                           wrap(b.wo), config_.n_heads, /*causal=*/true);
        x = tape.add(x, attn);
        const NodeId normed2 = tape.layer_norm(x, wrap(b.ln2_gain), wrap(b.ln2_bias));
        const NodeId mlp =
            tape.matmul(tape.silu(tape.matmul(normed2, wrap(b.w_in))), wrap(b.w_out));
        x = tape.add(x, mlp);
    }
    x = tape.layer_norm(x, wrap(final_ln_gain_), wrap(final_ln_bias_));
    return tape.matmul(x, wrap(lm_head_));
}

RealMatrix DecoderModel::logits(const RealMatrix& features) const {
    Tape tape;
    auto* self = const_cast<DecoderModel*>(this);
    const NodeId out = self->build_graph(tape, features, /*with_params=*/false);
    return tape.value(out);
}

double DecoderModel::loss(const RealMatrix& features, std::span<const TokenId> targets) const {
    Tape tape;
    auto* self = const_cast<DecoderModel*>(this);
    const NodeId logits_node = self->build_graph(tape, features, /*with_params=*/false);
    const NodeId loss_node =
        tape.cross_entropy(logits_node, std::vector<TokenId>(targets.begin(), targets.end()));
    return tape.value(loss_node)(0, 0);
}

double DecoderModel::loss_and_backward(const RealMatrix& features,
                                       std::span<const TokenId> targets) {
    Tape tape;
    const NodeId logits_node = build_graph(tape, features, /*with_params=*/true);
    const NodeId loss_node =
        tape.cross_entropy(logits_node, std::vector<TokenId>(targets.begin(), targets.end()));
    tape.backward(loss_node);
    return tape.value(loss_node)(0, 0);
}

std::vector<RealMatrix> DecoderModel::snapshot() const {
    std::vector<RealMatrix> out;
    for (const Parameter* p : trainable()) out.push_back(p->value);
    return out;
}

void DecoderModel::restore(const std::vector<RealMatrix>& snapshot) {
    const auto params = trainable();
    if (snapshot.size() != params.size())
        throw std::invalid_argument("DecoderModel::restore: snapshot size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snapshot[i];
}

void DecoderModel::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    nlohmann::json config_json = nlohmann::json::object();
    for (const auto& [key, value] : config_.to_kv()) config_json[key] = value;
    nlohmann::json header{
        {"format_version", 1}, {"feature_dim", feature_dim_}, {"config", config_json}};
    std::vector<double> blob;
    for (double v : input_projection_.flat()) blob.push_back(v);
    nlohmann::json shapes = nlohmann::json::array();
    for (const Parameter* p : trainable()) {
        shapes.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
        for (double v : p->value.flat()) blob.push_back(v);
    }
    header["params"] = shapes;
    header["projection_rows"] = input_projection_.rows();
    header["projection_cols"] = input_projection_.cols();
    write_text_file(dir / "checkpoint.json", header.dump(2) + "\n");
    write_doubles_binary(dir / "params.bin", blob);
}

DecoderModel DecoderModel::load(const std::filesystem::path& dir) {
    const auto header = nlohmann::json::parse(read_text_file(dir / "checkpoint.json"));
    KvMap kv;
    for (const auto& [key, value] : header.at("config").items())
        kv[key] = value.get<std::string>();
    DecoderModel model(DecoderConfig::from_kv(kv), header.at("feature_dim").get<std::size_t>());

    const std::vector<double> blob = read_doubles_binary(dir / "params.bin");
    std::size_t offset = 0;
    const auto take = [&blob, &offset](RealMatrix& m) {
        if (offset + m.size() > blob.size())
            throw std::runtime_error("checkpoint: params.bin too short");
        std::copy(blob.begin() + static_cast<std::ptrdiff_t>(offset),
                  blob.begin() + static_cast<std::ptrdiff_t>(offset + m.size()),
                  m.flat().begin());
        offset += m.size();
    };
    const std::size_t proj_rows = header.at("projection_rows").get<std::size_t>();
    const std::size_t proj_cols = header.at("projection_cols").get<std::size_t>();
    model.input_projection_ = RealMatrix(proj_rows, proj_cols);
    take(model.input_projection_);
    for (Parameter* p : model.trainable()) take(p->value);
    if (offset != blob.size()) throw std::runtime_error("checkpoint: params.bin has extra data");
    return model;
}

double schedule_lr(std::size_t step, std::size_t warmup_steps, std::size_t total_steps,
                   double peak) {
    if (total_steps == 0) throw std::invalid_argument("schedule_lr: total_steps must be > 0");
    if (warmup_steps >= total_steps)
        throw std::invalid_argument("schedule_lr: warmup must end before the final step");
    if (!(peak > 0.0)) throw std::invalid_argument("schedule_lr: peak lr must be > 0");
    if (step >= total_steps) return 0.0;
    if (step <= warmup_steps)
        return warmup_steps == 0
                   ? peak
                   : peak * static_cast<double>(step) / static_cast<double>(warmup_steps);
    return peak * static_cast<double>(total_steps - step) /
           static_cast<double>(total_steps - warmup_steps);
}

TrainResult train_decoder(DecoderModel& model, const FeatureProvider& provider,
                          std::span<const TokenId> train_ids, std::span<const TokenId> val_ids,
                          const TrainConfig& config) {
    if (config.batch_sequences == 0) throw std::invalid_argument("train: batch_sequences > 0");
    if (config.epochs == 0) throw std::invalid_argument("train: epochs > 0");
    const std::size_t ctx = std::min(config.context_tokens, model.config().context_length);

    const std::vector<Chunk> chunks = make_chunks(train_ids.size(), ctx);
    const std::vector<Chunk> val_chunks = make_chunks(val_ids.size(), ctx);
    if (chunks.empty()) throw std::invalid_argument("train: training stream too short");
    if (val_chunks.empty()) throw std::invalid_argument("train: validation stream too short");

    // The encoder is frozen, so per-chunk features never change; precompute.
    const auto precompute = [&provider](std::span<const TokenId> ids,
                                        const std::vector<Chunk>& cs) {
        std::vector<RealMatrix> features;
        features.reserve(cs.size());
        for (const Chunk& c : cs)
            features.push_back(provider.features_for(ids.subspan(c.begin, c.length)));
        return features;
    };
    const std::vector<RealMatrix> train_features = precompute(train_ids, chunks);
    const std::vector<RealMatrix> val_features = precompute(val_ids, val_chunks);

    const auto targets_of = [](std::span<const TokenId> ids, const Chunk& c) {
        return std::vector<TokenId>(ids.begin() + static_cast<std::ptrdiff_t>(c.begin + 1),
                                    ids.begin() + static_cast<std::ptrdiff_t>(c.begin + 1 + c.length));
    };

    const std::size_t batches_per_epoch =
        (chunks.size() + config.batch_sequences - 1) / config.batch_sequences;
    const std::size_t total_steps = config.epochs * batches_per_epoch;

    TrainResult result;
    result.total_steps = total_steps;
    result.train_chunks = chunks.size();

    const auto params = model.trainable();
    Adam adam(params);

    const auto val_loss = [&] {
        double sum = 0.0;
        std::size_t tokens = 0;
        for (std::size_t i = 0; i < val_chunks.size(); ++i) {
            const auto targets = targets_of(val_ids, val_chunks[i]);
            sum += model.loss(val_features[i], targets) * static_cast<double>(targets.size());
            tokens += targets.size();
        }
        return sum / static_cast<double>(tokens);
    };

    std::vector<RealMatrix> best = model.snapshot();
    double initial_val = val_loss();
    result.best_val_loss = initial_val;
    result.best_step = 0;
    result.curve.push_back({0, "val", initial_val, 0.0});

    std::vector<std::size_t> order(chunks.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        Rng rng = Rng(config.data_seed).fork(epoch);
        rng.shuffle(order);
        for (std::size_t batch = 0; batch < batches_per_epoch; ++batch) {
            const std::size_t begin = batch * config.batch_sequences;
            const std::size_t end = std::min(begin + config.batch_sequences, chunks.size());
            if (begin >= end) continue;

            for (Parameter* p : params) p->zero_grad();
            double batch_loss = 0.0;
            for (std::size_t i = begin; i < end; ++i) {
                const std::size_t c = order[i];
                batch_loss +=
                    model.loss_and_backward(train_features[c], targets_of(train_ids, chunks[c]));
            }
            const double n_seqs = static_cast<double>(end - begin);
            batch_loss /= n_seqs;
            if (!std::isfinite(batch_loss)) {
                std::ostringstream msg;
                msg << "train: non-finite loss at step " << step + 1 << " (epoch " << epoch
                    << ", batch " << batch << ", lr "
                    << schedule_lr(step + 1, config.warmup_steps, total_steps, config.peak_lr)
                    << ")";
                throw std::runtime_error(msg.str());
            }

            ++step;
            const double lr = schedule_lr(step, config.warmup_steps, total_steps, config.peak_lr);
            adam.step(params, lr, 1.0 / n_seqs);
            result.curve.push_back({step, "train", batch_loss, lr});

            if (step % config.eval_interval == 0 || step == total_steps) {
                const double vl = val_loss();
                result.curve.push_back({step, "val", vl, lr});
                if (vl < result.best_val_loss) {
                    result.best_val_loss = vl;
                    result.best_step = step;
                    best = model.snapshot();
                }
            }
        }
    }
    model.restore(best);
    return result;
}

std::string loss_curves_csv(const TrainResult& result) {
    std::string out = "step,split,loss,lr\n";
    for (const CurvePoint& p : result.curve) {
        out += std::to_string(p.step) + ',' + p.split + ',' + format_double(p.loss) + ',' +
               format_double(p.lr) + '\n';
    }
    return out;
}

std::vector<TokenId> prepare_lm_stream(const Vocab& vocab, std::string_view corpus_text) {
    std::vector<TokenId> stream;
    std::size_t pos = 0;
    while (pos < corpus_text.size()) {
        std::size_t sep = corpus_text.find("\n\n", pos);
        if (sep == std::string_view::npos) sep = corpus_text.size();
        const std::string_view doc = corpus_text.substr(pos, sep - pos);
        if (!doc.empty()) {
            stream.push_back(Vocab::kBosId);
            const TokenSequence seq = vocab.encode(doc);
            stream.insert(stream.end(), seq.ids.begin(), seq.ids.end());
        }
        pos = sep + 2;
    }
    return stream;
}

double corpus_cross_entropy(const DecoderModel& model, const FeatureProvider& provider,
                            std::span<const TokenId> ids, std::size_t context_tokens) {
    const std::size_t ctx = std::min(context_tokens, model.config().context_length);
    const std::vector<Chunk> chunks = make_chunks(ids.size(), ctx);
    if (chunks.empty()) throw std::invalid_argument("corpus_cross_entropy: stream too short");
    double sum = 0.0;
    std::size_t tokens = 0;
    for (const Chunk& c : chunks) {
        const RealMatrix features = provider.features_for(ids.subspan(c.begin, c.length));
        const std::vector<TokenId> targets(ids.begin() + static_cast<std::ptrdiff_t>(c.begin + 1),
                                           ids.begin() +
                                               static_cast<std::ptrdiff_t>(c.begin + 1 + c.length));
        sum += model.loss(features, targets) * static_cast<double>(targets.size());
        tokens += targets.size();
    }
    return sum / static_cast<double>(tokens);
}

double perplexity(const DecoderModel& model, const FeatureProvider& provider,
                  std::span<const TokenId> ids, std::size_t context_tokens) {
    return std::exp(corpus_cross_entropy(model, provider, ids, context_tokens));
}

ReadingTimeData load_reading_times(const std::filesystem::path& path) {
    ReadingTimeData data;
    const auto rows = read_csv(path);
    for (std::size_t i = 1; i < rows.size(); ++i) {  // skip header
        const auto& row = rows[i];
        if (row.size() != 4) throw std::runtime_error("reading times csv: bad row");
        data.rows.push_back({row[0], std::stoull(row[1]), row[2], std::stod(row[3])});
    }
    return data;
}

void save_reading_times(const std::filesystem::path& path, const ReadingTimeData& data) {
    std::string out = "story,word_index,word,mean_rt_ms\n";
    for (const auto& r : data.rows) {
        out += csv_escape(r.story) + ',' + std::to_string(r.word_index) + ',' +
               csv_escape(r.word) + ',' + format_double(r.rt_ms) + '\n';
    }
    write_text_file(path, out);
}

std::vector<double> per_word_losses(const DecoderModel& model, const FeatureProvider& provider,
                                    const Vocab& vocab, const ReadingTimeData& data,
                                    std::vector<bool>* scored_flags) {
    // Group row indices by story, preserving word order.
    std::vector<std::pair<std::string, std::vector<std::size_t>>> stories;
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
        const auto& row = data.rows[i];
        auto it = std::find_if(stories.begin(), stories.end(),
                               [&](const auto& s) { return s.first == row.story; });
        if (it == stories.end()) {
            stories.push_back({row.story, {i}});
        } else {
            it->second.push_back(i);
        }
    }

    std::vector<double> losses(data.rows.size(), 0.0);
    std::vector<bool> scored(data.rows.size(), false);

    for (auto& [story, row_indices] : stories) {
        std::sort(row_indices.begin(), row_indices.end(), [&](std::size_t a, std::size_t b) {
            return data.rows[a].word_index < data.rows[b].word_index;
        });
        // Empty surface words can never align to a token; skip them upfront.
        std::vector<std::size_t> active_rows;
        for (std::size_t idx : row_indices)
            if (!data.rows[idx].word.empty()) active_rows.push_back(idx);
        if (active_rows.empty()) continue;

        // Rebuild the story text; whitespace attaches to the following word.
        std::string text;
        std::vector<std::pair<std::size_t, std::size_t>> spans;  // extended byte spans
        for (std::size_t idx : active_rows) {
            const std::size_t begin = text.size();
            if (!text.empty()) text += ' ';
            text += data.rows[idx].word;
            spans.emplace_back(begin, text.size());
        }

        std::vector<TokenId> stream{Vocab::kBosId};
        const TokenSequence seq = vocab.encode(text);
        stream.insert(stream.end(), seq.ids.begin(), seq.ids.end());
        if (stream.size() < 2) continue;

        // Per-token losses over the story; chunked by the model context.
        std::vector<double> token_loss(stream.size(), 0.0);  // index = stream position
        const std::vector<Chunk> chunks =
            make_chunks(stream.size(), model.config().context_length);
        for (const Chunk& c : chunks) {
            const std::span<const TokenId> span(stream);
            const RealMatrix features = provider.features_for(span.subspan(c.begin, c.length));
            const RealMatrix logit_rows = model.logits(features);
            for (std::size_t t = 0; t < c.length; ++t) {
                const TokenId target = stream[c.begin + 1 + t];
                // log-softmax of the target entry
                double mx = logit_rows(t, 0);
                for (std::size_t j = 0; j < logit_rows.cols(); ++j)
                    mx = std::max(mx, logit_rows(t, j));
                double sum = 0.0;
                for (std::size_t j = 0; j < logit_rows.cols(); ++j)
                    sum += std::exp(logit_rows(t, j) - mx);
                token_loss[c.begin + 1 + t] = -(logit_rows(t, target) - mx - std::log(sum));
            }
        }

        // Assign token losses to words by byte offsets.
        std::size_t byte_pos = 0;
        std::size_t word_cursor = 0;
        for (std::size_t p = 1; p < stream.size(); ++p) {
            const TokenId id = stream[p];
            if (id == Vocab::kBosId || id == Vocab::kUnknownId) continue;
            const std::size_t token_len = vocab.token_bytes(id).size();
            while (word_cursor + 1 < spans.size() && byte_pos >= spans[word_cursor + 1].first)
                ++word_cursor;
            const std::size_t row_idx = active_rows[word_cursor];
            losses[row_idx] += token_loss[p];
            scored[row_idx] = true;
            byte_pos += token_len;
        }
    }

    if (scored_flags) *scored_flags = std::move(scored);
    return losses;
}

BehavioralResult behavioral_alignment(const DecoderModel& model, const FeatureProvider& provider,
                                      const Vocab& vocab, const ReadingTimeData& data) {
    std::vector<bool> scored;
    const std::vector<double> losses = per_word_losses(model, provider, vocab, data, &scored);

    std::vector<double> xs, ys;
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
        if (!scored[i]) {
            ++skipped;
            continue;
        }
        xs.push_back(losses[i]);
        ys.push_back(data.rows[i].rt_ms);
    }
    if (xs.size() < 3)
        throw std::invalid_argument("behavioral_alignment: fewer than 3 scored words");
    BehavioralResult result;
    result.pearson = pearson_r(xs, ys);
    result.scored_words = xs.size();
    result.skipped_words = skipped;
    return result;
}

}  // namespace suma
