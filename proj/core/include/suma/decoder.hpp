#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "suma/autodiff.hpp"
#include "suma/encoder.hpp"
#include "suma/localizer.hpp"
#include "suma/matrix.hpp"
#include "suma/tokenizer.hpp"

namespace suma {

enum class InputSource { Embeddings, FinalLayer, LocalizedUnits };

std::string input_source_name(InputSource s);
InputSource input_source_from_name(std::string_view name);

struct DecoderConfig {
    std::size_t n_blocks = 1;  // 1 or 2
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t mlp_hidden = 256;
    std::size_t vocab_size = 0;
    std::size_t context_length = 128;
    InputSource input_source = InputSource::Embeddings;
    std::uint64_t seed = 0;

    void validate() const;
    KvMap to_kv() const;
    static DecoderConfig from_kv(const KvMap& kv);
};

/// Per-position input representations from the frozen encoder. The encoder
/// must be causal for FinalLayer and LocalizedUnits, otherwise future tokens
/// would leak into the language-modeling inputs.
class FeatureProvider {
public:
    FeatureProvider(InputSource source, const EncoderWeights* encoder,
                    const UnitMask* mask = nullptr);

    InputSource source() const { return source_; }
    std::size_t feature_dim() const;
    RealMatrix features_for(std::span<const TokenId> ids) const;

private:
    InputSource source_;
    const EncoderWeights* encoder_;
    const UnitMask* mask_;
};

/// Causal transformer block(s) plus LM head over frozen per-position
/// features. When the feature width differs from d_model, features pass
/// through a frozen random projection so trainable parameter counts stay
/// identical across input variants.
class DecoderModel {
public:
    DecoderModel(const DecoderConfig& config, std::size_t feature_dim);

    const DecoderConfig& config() const { return config_; }
    std::size_t feature_dim() const { return feature_dim_; }
    const RealMatrix& input_projection() const { return input_projection_; }

    std::vector<autodiff::Parameter*> trainable();
    std::vector<const autodiff::Parameter*> trainable() const;
    std::size_t trainable_count() const;

    RealMatrix logits(const RealMatrix& features) const;
    double loss(const RealMatrix& features, std::span<const TokenId> targets) const;
    /// Forward + backward; gradients accumulate into the trainable parameters.
    double loss_and_backward(const RealMatrix& features, std::span<const TokenId> targets);

    std::vector<RealMatrix> snapshot() const;
    void restore(const std::vector<RealMatrix>& snapshot);

    void save(const std::filesystem::path& dir) const;
    static DecoderModel load(const std::filesystem::path& dir);

private:
    struct Block {
        autodiff::Parameter ln1_gain, ln1_bias;
        autodiff::Parameter wq, wk, wv, wo;
        autodiff::Parameter ln2_gain, ln2_bias;
        autodiff::Parameter w_in, w_out;
    };

    DecoderConfig config_;
    std::size_t feature_dim_ = 0;
    RealMatrix input_projection_;  // frozen; empty when feature_dim == d_model
    std::vector<Block> blocks_;
    autodiff::Parameter pos_table_;
    autodiff::Parameter final_ln_gain_, final_ln_bias_;
    autodiff::Parameter lm_head_;

    autodiff::NodeId build_graph(autodiff::Tape& tape, const RealMatrix& features,
                                 bool with_params);
};

/// Linear warmup 0 -> peak over warmup steps, then linear decay to 0 at the
/// final step. Exact at the endpoints.
double schedule_lr(std::size_t step, std::size_t warmup_steps, std::size_t total_steps,
                   double peak);

struct TrainConfig {
    std::size_t epochs = 1;
    std::size_t batch_sequences = 16;  // effective batch, reached by accumulation
    std::size_t context_tokens = 128;
    double peak_lr = 5e-3;
    std::size_t warmup_steps = 500;
    std::size_t eval_interval = 1000;
    std::uint64_t data_seed = 0;
};

struct CurvePoint {
    std::size_t step = 0;
    std::string split;  // "train" | "val"
    double loss = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<CurvePoint> curve;
    double best_val_loss = std::numeric_limits<double>::infinity();
    std::size_t best_step = 0;
    std::size_t total_steps = 0;
    std::size_t train_chunks = 0;
};

/// Adam with bias correction under the warmup/decay schedule; gradient
/// accumulation across the batch's sequences; the model is left at the
/// lowest-validation-loss checkpoint. Aborts on non-finite loss.
TrainResult train_decoder(DecoderModel& model, const FeatureProvider& provider,
                          std::span<const TokenId> train_ids, std::span<const TokenId> val_ids,
                          const TrainConfig& config);

std::string loss_curves_csv(const TrainResult& result);

/// Tokenizes a corpus document by document (blank-line separators), inserting
/// a begin-of-sequence id at every document start.
std::vector<TokenId> prepare_lm_stream(const Vocab& vocab, std::string_view corpus_text);

double corpus_cross_entropy(const DecoderModel& model, const FeatureProvider& provider,
                            std::span<const TokenId> ids, std::size_t context_tokens);
double perplexity(const DecoderModel& model, const FeatureProvider& provider,
                  std::span<const TokenId> ids, std::size_t context_tokens);

struct ReadingTimeRow {
    std::string story;
    std::size_t word_index = 0;
    std::string word;
    double rt_ms = 0.0;
};

struct ReadingTimeData {
    std::vector<ReadingTimeRow> rows;
};

ReadingTimeData load_reading_times(const std::filesystem::path& path);
void save_reading_times(const std::filesystem::path& path, const ReadingTimeData& data);

struct BehavioralResult {
    double pearson = 0.0;
    std::size_t scored_words = 0;
    std::size_t skipped_words = 0;  // word/token misalignments, reported
};

/// Pearson correlation between per-word summed token cross-entropy and mean
/// reading time. Words spanning several tokens sum their token losses;
/// whitespace attaches to the following word during alignment.
BehavioralResult behavioral_alignment(const DecoderModel& model, const FeatureProvider& provider,
                                      const Vocab& vocab, const ReadingTimeData& data);

/// Per-word summed losses in row order, the raw material of the correlation;
/// exposed so synthetic benchmarks can plant exact constructions.
std::vector<double> per_word_losses(const DecoderModel& model, const FeatureProvider& provider,
                                    const Vocab& vocab, const ReadingTimeData& data,
                                    std::vector<bool>* scored_flags = nullptr);

}  // namespace suma
